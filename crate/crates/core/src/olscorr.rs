//! Streaming overlap-save correlator over the bank of frequency hypotheses,
//! and the non-coherent correlation grid it feeds.
//!
//! Block `b` covers input samples `[b*step - N_O, b*step - N_O + N)`; the stream
//! is zero-prefixed by `N_O` samples so block 0 starts at sample `-N_O`. Lags
//! are indexed by the absolute position of the first sample of the
//! correlation window. Lags are released in 2400-lag periods: period `j` covers
//! lags `[j*N_s - N, j*N_s + N_s - N)`, which is always complete once the
//! `j`-th subframe of input has been pushed.

use std::io::Write;

use crate::error::{Error, Result};
use crate::fir::LOW_RATE_HZ;
use crate::npss::{FrequencyGrid, ReferenceBank};
use crate::spectral::{FftPlan, Spectrum};
use crate::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsConfig {
    pub fft_size: usize,
    pub overlap: usize,
    pub samples_per_subframe: usize,
    pub grid_downsample: usize,
    /// Multiplier applied to the accumulator before each new subframe is
    /// added. `None` keeps everything.
    pub decay: Option<f64>,
}

impl Default for OlsConfig {
    fn default() -> Self {
        Self {
            fft_size: 1024,
            overlap: 188,
            samples_per_subframe: 2400,
            grid_downsample: 2,
            decay: None,
        }
    }
}

impl OlsConfig {
    pub fn step(&self) -> usize {
        self.fft_size - self.overlap
    }

    pub fn reference_len(&self) -> usize {
        self.overlap + 1
    }

    pub fn grid_cells(&self) -> usize {
        self.samples_per_subframe / self.grid_downsample
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(self.fft_size));
        }
        if self.overlap >= self.fft_size {
            return Err(Error::param("overlap", "must be smaller than the FFT size"));
        }
        if self.grid_downsample == 0 || !self.samples_per_subframe.is_multiple_of(self.grid_downsample) {
            return Err(Error::param(
                "grid_downsample",
                "must divide the samples per subframe",
            ));
        }
        // pooled lag pairs must never straddle a block or a period
        if self.grid_downsample > 1
            && (!self.step().is_multiple_of(self.grid_downsample)
                || !self.overlap.is_multiple_of(self.grid_downsample)
                || !self.fft_size.is_multiple_of(self.grid_downsample))
        {
            return Err(Error::param(
                "grid_downsample",
                "must divide step, overlap and FFT size",
            ));
        }
        if let Some(d) = self.decay {
            if !(0.0..=1.0).contains(&d) {
                return Err(Error::param("decay", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Direct evaluation of the ML metric
/// `C = sum_{k=0}^{L-1} r[theta+k] conj(s[k]) exp(-j 2 pi f_o k / fs)`
/// at the 240 kHz coarse rate.
pub fn correlate_direct(r: &[C64], theta: usize, f_o: f64, reference: &[C64]) -> Result<C64> {
    correlate_direct_at(r, theta, f_o, reference, LOW_RATE_HZ)
}

pub fn correlate_direct_at(
    r: &[C64],
    theta: usize,
    f_o: f64,
    reference: &[C64],
    sample_rate_hz: f64,
) -> Result<C64> {
    if theta + reference.len() > r.len() {
        return Err(Error::LagOutOfRange {
            lag: theta,
            len: r.len(),
        });
    }
    let w = -2.0 * std::f64::consts::PI * f_o / sample_rate_hz;
    Ok(r[theta..theta + reference.len()]
        .iter()
        .zip(reference)
        .enumerate()
        .map(|(k, (x, s))| x * s.conj() * C64::from_polar(1.0, w * k as f64))
        .sum())
}

/// One FFT, `N_f` spectrum products and `N_f` IFFTs per block.
#[derive(Debug, Clone)]
pub struct OlsCorrelator {
    cfg: OlsConfig,
    plan: FftPlan,
    bank: ReferenceBank,
    spectrum: Vec<C64>,
    work: Vec<C64>,
    scratch: Vec<C64>,
}

impl OlsCorrelator {
    pub fn new(cfg: OlsConfig, bank: ReferenceBank) -> Result<Self> {
        cfg.validate()?;
        if bank.fft_size != cfg.fft_size {
            return Err(Error::Dimension {
                what: "reference bank FFT size",
                expected: cfg.fft_size,
                actual: bank.fft_size,
            });
        }
        let plan = FftPlan::new(cfg.fft_size)?;
        let n = cfg.fft_size;
        // the inverse transform's 1/N is folded into the bank
        let mut bank = bank;
        let scale = 1.0 / n as f64;
        for row in &mut bank.spectra {
            *row = Spectrum::from_bins(row.bins().iter().map(|v| v * scale).collect())?;
        }
        Ok(Self {
            cfg,
            bank,
            spectrum: vec![C64::new(0.0, 0.0); n],
            work: vec![C64::new(0.0, 0.0); n],
            scratch: vec![C64::new(0.0, 0.0); plan.scratch_len()],
            plan,
        })
    }

    pub fn config(&self) -> &OlsConfig {
        &self.cfg
    }

    pub fn n_candidates(&self) -> usize {
        self.bank.spectra.len()
    }

    /// Correlations for the `step` valid lags of one block, per candidate.
    pub fn process_block(&mut self, block: &[C64]) -> Result<Vec<Vec<C64>>> {
        let mut out = vec![Vec::with_capacity(self.cfg.step()); self.n_candidates()];
        self.process_block_with(block, |cand, lags| out[cand].extend_from_slice(lags))?;
        Ok(out)
    }

    fn process_block_with(
        &mut self,
        block: &[C64],
        mut sink: impl FnMut(usize, &[C64]),
    ) -> Result<()> {
        let n = self.cfg.fft_size;
        if block.len() != n {
            return Err(Error::Dimension {
                what: "OLS block",
                expected: n,
                actual: block.len(),
            });
        }
        self.spectrum.copy_from_slice(block);
        self.plan.forward_with_scratch(&mut self.spectrum, &mut self.scratch);
        let step = self.cfg.step();
        for (cand, row) in self.bank.spectra.iter().enumerate() {
            for ((w, x), h) in self.work.iter_mut().zip(&self.spectrum).zip(row.bins()) {
                *w = x * h;
            }
            self.plan.inverse_unscaled_with_scratch(&mut self.work, &mut self.scratch);
            sink(cand, &self.work[..step]);
        }
        Ok(())
    }
}

/// Correlations for one period of `N_s` consecutive lags.
#[derive(Debug, Clone)]
pub struct SubframeCorrelation {
    pub period: u64,
    /// Absolute lag of column 0. Lags below zero reach into the zero prefix
    /// and are invalid.
    pub first_lag: i64,
    /// `corr[candidate][i]` is the correlation at lag `first_lag + i`.
    pub corr: Vec<Vec<C64>>,
}

impl SubframeCorrelation {
    /// `|C|` indexed by `lag mod N_s`, zero for invalid lags.
    pub fn magnitudes(&self) -> Vec<Vec<f64>> {
        let ns = self.corr.first().map_or(0, Vec::len);
        self.corr
            .iter()
            .map(|row| {
                let mut mags = vec![0.0; ns];
                for (i, v) in row.iter().enumerate() {
                    let lag = self.first_lag + i as i64;
                    if lag >= 0 {
                        mags[lag.rem_euclid(ns as i64) as usize] = v.norm();
                    }
                }
                mags
            })
            .collect()
    }
}

/// Streaming state: buffered input, computed-but-unreleased lags and counters.
#[derive(Debug, Clone)]
pub struct OlsStream {
    correlator: OlsCorrelator,
    buf: Vec<C64>,
    /// absolute sample index of `buf[0]`
    buf_start: i64,
    pending: Vec<Vec<C64>>,
    pending_start: i64,
    next_period: u64,
    fft_count: u64,
    ifft_count: u64,
}

impl OlsStream {
    pub fn new(correlator: OlsCorrelator) -> Self {
        let cfg = correlator.config().clone();
        let n_f = correlator.n_candidates();
        Self {
            correlator,
            buf: vec![C64::new(0.0, 0.0); cfg.overlap],
            buf_start: -(cfg.overlap as i64),
            pending: vec![Vec::new(); n_f],
            pending_start: -(cfg.overlap as i64),
            next_period: 0,
            fft_count: 0,
            ifft_count: 0,
        }
    }

    pub fn config(&self) -> &OlsConfig {
        self.correlator.config()
    }

    pub fn n_candidates(&self) -> usize {
        self.correlator.n_candidates()
    }

    pub fn fft_count(&self) -> u64 {
        self.fft_count
    }

    pub fn ifft_count(&self) -> u64 {
        self.ifft_count
    }

    fn period_start(&self, period: u64) -> i64 {
        let cfg = self.config();
        period as i64 * cfg.samples_per_subframe as i64 - cfg.fft_size as i64
    }

    /// Push any number of samples; returns every period completed by them.
    pub fn push(&mut self, samples: &[C64]) -> Vec<SubframeCorrelation> {
        let cfg = self.config().clone();
        let (n, step, ns) = (cfg.fft_size, cfg.step(), cfg.samples_per_subframe);
        self.buf.extend_from_slice(samples);
        let mut done = Vec::new();
        let mut consumed = 0;
        while self.buf.len() - consumed >= n {
            let block = &self.buf[consumed..consumed + n];
            let pending = &mut self.pending;
            self.correlator
                .process_block_with(block, |cand, lags| pending[cand].extend_from_slice(lags))
                .expect("block length equals FFT size");
            self.fft_count += 1;
            self.ifft_count += self.correlator.n_candidates() as u64;
            consumed += step;

            loop {
                let start = self.period_start(self.next_period);
                let available_end = self.pending_start + self.pending[0].len() as i64;
                if available_end < start + ns as i64 {
                    break;
                }
                let skip = (start - self.pending_start).max(0) as usize;
                // lags before the first block never exist; they read as zero
                let pad = ((self.pending_start - start).max(0) as usize).min(ns);
                let mut corr = Vec::with_capacity(self.pending.len());
                for row in &mut self.pending {
                    row.drain(..skip);
                    let mut out = vec![C64::new(0.0, 0.0); pad];
                    out.extend(row.drain(..ns - pad));
                    corr.push(out);
                }
                self.pending_start = start + ns as i64;
                done.push(SubframeCorrelation {
                    period: self.next_period,
                    first_lag: start,
                    corr,
                });
                self.next_period += 1;
            }
        }
        self.buf.drain(..consumed);
        self.buf_start += consumed as i64;
        done
    }

    /// Push exactly one subframe (`N_s` samples).
    pub fn stream_subframe(&mut self, samples: &[C64]) -> Result<Option<SubframeCorrelation>> {
        let ns = self.config().samples_per_subframe;
        if samples.len() != ns {
            return Err(Error::Dimension {
                what: "subframe samples",
                expected: ns,
                actual: samples.len(),
            });
        }
        let mut done = self.push(samples);
        debug_assert!(done.len() <= 1);
        Ok(done.pop())
    }
}

/// Non-coherently combined `max-pooled |C|^2`, cells x candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGrid {
    n_cells: usize,
    n_candidates: usize,
    downsample: usize,
    decay: Option<f64>,
    /// candidate-major: `acc[candidate * n_cells + cell]`
    acc: Vec<f64>,
    // cells that have seen at least one valid lag
    filled: Vec<bool>,
    subframes_combined: usize,
}

impl CorrelationGrid {
    pub fn new(cfg: &OlsConfig, n_candidates: usize) -> Self {
        Self {
            n_cells: cfg.grid_cells(),
            n_candidates,
            downsample: cfg.grid_downsample,
            decay: cfg.decay,
            acc: vec![0.0; cfg.grid_cells() * n_candidates],
            filled: vec![false; cfg.grid_cells()],
            subframes_combined: 0,
        }
    }

    /// Grid with explicit contents (`values[cell * n_candidates + candidate]`),
    /// for analysis and tests.
    pub fn from_values(n_cells: usize, n_candidates: usize, values: Vec<f64>, subframes: usize) -> Result<Self> {
        if values.len() != n_cells * n_candidates {
            return Err(Error::Dimension {
                what: "grid values",
                expected: n_cells * n_candidates,
                actual: values.len(),
            });
        }
        Ok(Self {
            n_cells,
            n_candidates,
            downsample: 2,
            decay: None,
            acc: (0..n_candidates)
                .flat_map(|cand| (0..n_cells).map(move |cell| (cell, cand)))
                .map(|(cell, cand)| values[cell * n_candidates + cand])
                .collect(),
            filled: vec![true; n_cells],
            subframes_combined: subframes,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_candidates(&self) -> usize {
        self.n_candidates
    }

    pub fn subframes_combined(&self) -> usize {
        self.subframes_combined
    }

    /// All cells of one frequency candidate.
    pub fn candidate_row(&self, candidate: usize) -> &[f64] {
        &self.acc[candidate * self.n_cells..(candidate + 1) * self.n_cells]
    }

    /// Per cell, the largest value over candidates and the (lowest) candidate
    /// holding it.
    pub fn cell_maxima(&self) -> (Vec<f64>, Vec<usize>) {
        let mut best = self.candidate_row(0).to_vec();
        let mut arg = vec![0; self.n_cells];
        for cand in 1..self.n_candidates {
            for ((b, a), &v) in best.iter_mut().zip(arg.iter_mut()).zip(self.candidate_row(cand)) {
                if v > *b {
                    *b = v;
                    *a = cand;
                }
            }
        }
        (best, arg)
    }

    pub fn get(&self, cell: usize, candidate: usize) -> f64 {
        self.acc[candidate * self.n_cells + cell]
    }

    /// Mean over the cells that have received data.
    pub fn mean(&self) -> f64 {
        let filled = self.filled.iter().filter(|&&f| f).count();
        if filled == 0 {
            return 0.0;
        }
        self.acc.iter().sum::<f64>() / (filled * self.n_candidates) as f64
    }

    pub fn filled_cells(&self) -> usize {
        self.filled.iter().filter(|&&f| f).count()
    }

    pub fn reset(&mut self) {
        self.acc.iter_mut().for_each(|v| *v = 0.0);
        self.filled.iter_mut().for_each(|f| *f = false);
        self.subframes_combined = 0;
    }

    /// Adds one period of `|C|` values (indexed `[candidate][lag mod N_s]`):
    /// adjacent lag pairs are max-pooled, then squared and summed in.
    pub fn accumulate_subframe(&mut self, magnitudes: &[Vec<f64>]) -> Result<()> {
        if magnitudes.len() != self.n_candidates {
            return Err(Error::Dimension {
                what: "subframe candidates",
                expected: self.n_candidates,
                actual: magnitudes.len(),
            });
        }
        let ns = self.n_cells * self.downsample;
        for row in magnitudes {
            if row.len() != ns {
                return Err(Error::Dimension {
                    what: "subframe lags",
                    expected: ns,
                    actual: row.len(),
                });
            }
        }
        if let Some(d) = self.decay {
            self.acc.iter_mut().for_each(|v| *v *= d);
        }
        for (dst, row) in self.acc.chunks_exact_mut(self.n_cells).zip(magnitudes) {
            for (a, pair) in dst.iter_mut().zip(row.chunks_exact(self.downsample)) {
                let m = pair.iter().copied().fold(0.0, f64::max);
                *a += m * m;
            }
        }
        self.filled.iter_mut().for_each(|f| *f = true);
        self.subframes_combined += 1;
        Ok(())
    }

    /// Accumulates a streamed period directly from its complex correlations.
    pub fn accumulate(&mut self, sub: &SubframeCorrelation) -> Result<()> {
        if sub.corr.len() != self.n_candidates {
            return Err(Error::Dimension {
                what: "subframe candidates",
                expected: self.n_candidates,
                actual: sub.corr.len(),
            });
        }
        let ns = (self.n_cells * self.downsample) as i64;
        if let Some(d) = self.decay {
            self.acc.iter_mut().for_each(|v| *v *= d);
        }
        for row in &sub.corr {
            if row.len() as i64 != ns {
                return Err(Error::Dimension {
                    what: "subframe lags",
                    expected: ns as usize,
                    actual: row.len(),
                });
            }
        }
        let (ds, n_cells) = (self.downsample, self.n_cells);
        // first_lag is a multiple of the pooling factor, so chunks are pairs
        let first_valid = if sub.first_lag < 0 {
            (((-sub.first_lag) as usize).div_ceil(ds)).min(n_cells)
        } else {
            0
        };
        let cell0 = (sub.first_lag.rem_euclid(ns) as usize) / ds;
        // pooled pair i lands in cell (cell0 + i) mod n_cells: two contiguous runs
        let split = n_cells - cell0;
        let mid = split.max(first_valid);
        let pool = |p: &[C64]| match p {
            [a, b] => {
                let (a, b) = (a.norm_sqr(), b.norm_sqr());
                if a > b { a } else { b }
            }
            _ => p.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max),
        };
        for (dst, row) in self.acc.chunks_exact_mut(n_cells).zip(&sub.corr) {
            // pairs first_valid..split go to cells cell0.., the rest wrap to 0..
            let (head, tail) = dst.split_at_mut(cell0);
            let pairs = row[first_valid * ds..mid * ds].chunks_exact(ds);
            for (d, p) in tail[first_valid..mid].iter_mut().zip(pairs) {
                *d += pool(p);
            }
            let pairs = row[mid * ds..].chunks_exact(ds);
            for (d, p) in head[mid - split..].iter_mut().zip(pairs) {
                *d += pool(p);
            }
        }
        for i in first_valid..n_cells {
            self.filled[(cell0 + i) % n_cells] = true;
        }
        self.subframes_combined += 1;
        Ok(())
    }

    /// CSV dump: `cell,candidate,value`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "cell,candidate,value")?;
        for cell in 0..self.n_cells {
            for cand in 0..self.n_candidates {
                writeln!(w, "{cell},{cand},{:e}", self.get(cell, cand))?;
            }
        }
        Ok(())
    }
}

/// Frequency grid, reference bank and config bundled for building correlators.
#[derive(Debug, Clone)]
pub struct CorrelatorSetup {
    pub cfg: OlsConfig,
    pub grid: FrequencyGrid,
    pub bank: ReferenceBank,
}

impl CorrelatorSetup {
    pub fn standard() -> Self {
        let cfg = OlsConfig::default();
        let grid = FrequencyGrid::default();
        let reference = crate::npss::NpssReference::standard();
        let bank = crate::npss::reference_bank(&reference.ref_240k, &grid, cfg.fft_size)
            .expect("default bank parameters are valid");
        Self { cfg, grid, bank }
    }

    pub fn stream(&self) -> OlsStream {
        OlsStream::new(
            OlsCorrelator::new(self.cfg.clone(), self.bank.clone()).expect("setup is consistent"),
        )
    }

    pub fn grid_accumulator(&self) -> CorrelationGrid {
        CorrelationGrid::new(&self.cfg, self.grid.n_candidates)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::npss::NpssReference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stream(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn direct_metric_basics() {
        let s = &NpssReference::standard().ref_240k;
        let c = correlate_direct(s, 0, 0.0, s).unwrap();
        assert!((c - C64::new(1.0, 0.0)).norm() < 1e-12);
        let zeros = vec![C64::new(0.0, 0.0); 400];
        assert_eq!(correlate_direct(&zeros, 10, 500.0, s).unwrap(), C64::new(0.0, 0.0));
        let modulated: Vec<C64> = s
            .iter()
            .enumerate()
            .map(|(k, v)| v * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * 937.5 * k as f64 / 240_000.0))
            .collect();
        let c = correlate_direct(&modulated, 0, 937.5, s).unwrap();
        assert!((c.norm() - 1.0).abs() < 1e-9);
        assert!(matches!(
            correlate_direct(&zeros, 300, 0.0, s),
            Err(Error::LagOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_block_gives_zero() {
        let setup = CorrelatorSetup::standard();
        let mut c = OlsCorrelator::new(setup.cfg.clone(), setup.bank.clone()).unwrap();
        let out = c.process_block(&vec![C64::new(0.0, 0.0); 1024]).unwrap();
        assert_eq!(out.len(), 31);
        assert!(out.iter().flatten().all(|v| v.norm() == 0.0));
        assert!(c.process_block(&vec![C64::new(0.0, 0.0); 1000]).is_err());
    }

    #[test]
    fn block_matches_direct_for_all_candidates() {
        let setup = CorrelatorSetup::standard();
        let s = &NpssReference::standard().ref_240k;
        let mut c = OlsCorrelator::new(setup.cfg.clone(), setup.bank.clone()).unwrap();
        let block = random_stream(1024, 3);
        let out = c.process_block(&block).unwrap();
        for (cand, row) in out.iter().enumerate() {
            assert_eq!(row.len(), 836);
            let f = setup.grid.candidates_hz[cand];
            for lag in (0..836).step_by(7) {
                let d = correlate_direct(&block, lag, f, s).unwrap();
                assert!((row[lag] - d).norm() <= 1e-9 * d.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn clean_npss_in_block_peaks_at_true_lag() {
        let setup = CorrelatorSetup::standard();
        let s = &NpssReference::standard().ref_240k;
        let mut c = OlsCorrelator::new(setup.cfg.clone(), setup.bank.clone()).unwrap();
        let cfo = setup.grid.candidates_hz[22];
        let mut block = vec![C64::new(0.0, 0.0); 1024];
        for (k, v) in s.iter().enumerate() {
            block[300 + k] = v * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * cfo * k as f64 / 240_000.0);
        }
        let out = c.process_block(&block).unwrap();
        let row = &out[22];
        let (arg, peak) = row
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(arg, 300);
        assert!((peak - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stream_emits_one_period_per_subframe() {
        let setup = CorrelatorSetup::standard();
        let mut st = setup.stream();
        let x = random_stream(2400 * 4, 5);
        for (j, chunk) in x.chunks(2400).enumerate() {
            let sub = st.stream_subframe(chunk).unwrap().expect("period complete");
            assert_eq!(sub.period, j as u64);
            assert_eq!(sub.first_lag, 2400 * j as i64 - 1024);
            assert_eq!(sub.corr.len(), 31);
            assert!(sub.corr.iter().all(|r| r.len() == 2400));
        }
    }

    #[test]
    fn fft_rate_over_ten_seconds() {
        let setup = CorrelatorSetup::standard();
        let mut st = setup.stream();
        let zeros = vec![C64::new(0.0, 0.0); 2400];
        for _ in 0..1000 {
            st.stream_subframe(&zeros).unwrap();
        }
        assert!((st.fft_count() as i64 - 2871).abs() <= 1, "{}", st.fft_count());
        assert_eq!(st.ifft_count(), 31 * st.fft_count());
    }

    #[test]
    fn grid_accumulation() {
        let cfg = OlsConfig::default();
        let mut g = CorrelationGrid::new(&cfg, 3);
        g.accumulate_subframe(&vec![vec![0.0; 2400]; 3]).unwrap();
        assert_eq!(g.subframes_combined(), 1);
        assert!((0..g.n_candidates()).all(|c| g.candidate_row(c).iter().all(|&v| v == 0.0)));

        let mags: Vec<Vec<f64>> = (0..3)
            .map(|c| (0..2400).map(|i| ((i * 7 + c * 13) % 17) as f64 * 0.1).collect())
            .collect();
        let mut once = CorrelationGrid::new(&cfg, 3);
        once.accumulate_subframe(&mags).unwrap();
        let mut twice = once.clone();
        twice.accumulate_subframe(&mags).unwrap();
        for (a, b) in (0..3).flat_map(|c| once.candidate_row(c).iter().zip(twice.candidate_row(c))) {
            assert_eq!(2.0 * a, *b);
        }
        // max-pool then square
        let expect = mags[1][10].max(mags[1][11]).powi(2);
        assert_eq!(once.get(5, 1), expect);
        assert!(g.accumulate_subframe(&vec![vec![0.0; 2400]; 2]).is_err());
        assert!(g.accumulate_subframe(&vec![vec![0.0; 2000]; 3]).is_err());
    }

    #[test]
    fn decay_scales_history() {
        let cfg = OlsConfig {
            decay: Some(0.5),
            ..OlsConfig::default()
        };
        let mut g = CorrelationGrid::new(&cfg, 1);
        let mut mags = vec![vec![0.0; 2400]];
        mags[0][0] = 2.0;
        g.accumulate_subframe(&mags).unwrap();
        g.accumulate_subframe(&mags).unwrap();
        assert_eq!(g.get(0, 0), 4.0 * 0.5 + 4.0);
    }

    #[test]
    fn config_validation() {
        assert!(OlsConfig::default().validate().is_ok());
        assert_eq!(OlsConfig::default().step(), 836);
        assert_eq!(OlsConfig::default().reference_len(), 189);
        let bad = OlsConfig {
            fft_size: 1000,
            ..OlsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = OlsConfig {
            grid_downsample: 7,
            ..OlsConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
