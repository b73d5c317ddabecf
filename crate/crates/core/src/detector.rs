//! Decision layer: four-largest-peaks analysis of the correlation grid,
//! per-depth calibrated thresholds, the ML detector and the lag-137
//! auto-correlation baseline.

use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::channel::{FillerPolicy, NullStream, FRAME_LEN};
use crate::error::{Error, Result};
use crate::npss::{symbol_offsets, FrequencyGrid, CODE_COVER, NPSS_SYMBOLS, WAVEFORM_LEN};
use crate::olscorr::{CorrelationGrid, CorrelatorSetup, OlsStream};
use crate::rng::{derive_seed, streams};
use crate::C64;

/// Exclusion half-width around a selected peak, in grid cells.
pub const EXCLUSION_CELLS: usize = 2;
pub const DEFAULT_DISTINCTNESS: f64 = 1.2;
pub const DEFAULT_FA_TARGET: f64 = 0.01;
pub const DEFAULT_MAX_SUBFRAMES: usize = 200;
/// Fewest calibration runs allowed above a threshold.
pub const MIN_TAIL_COUNT: usize = 10;
/// Timing cells per 10 ms on the reported grid.
pub const TIMING_CELLS: usize = 1_200;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// Timing on the 1,200-cell grid (2 samples at 240 kHz per cell).
    pub theta_hat: usize,
    /// Frequency candidate; `None` for detectors without a frequency search.
    pub candidate: Option<usize>,
    pub f_hat_hz: Option<f64>,
    pub metric: f64,
    pub subframes_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub cell: usize,
    pub candidate: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakReport {
    pub peaks: [Peak; 4],
    pub grid_mean: f64,
}

impl PeakReport {
    /// Peak-to-mean ratio of the strongest peak.
    pub fn ratio(&self) -> f64 {
        self.peaks[0].value / self.grid_mean
    }

    /// `peaks[0] / peaks[3]`; infinite when the fourth peak is zero.
    pub fn distinctness(&self) -> f64 {
        if self.peaks[3].value == 0.0 {
            return if self.peaks[0].value > 0.0 { f64::INFINITY } else { 1.0 };
        }
        self.peaks[0].value / self.peaks[3].value
    }

    /// Calibration statistic: the ratio when the distinctness test passes,
    /// `-inf` otherwise.
    pub fn statistic(&self, distinctness: f64) -> f64 {
        if self.grid_mean > 0.0 && self.distinctness() >= distinctness {
            self.ratio()
        } else {
            f64::NEG_INFINITY
        }
    }
}

fn circular_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(n - d)
}

/// Global maximum plus the next three maxima, each at least `W + 1` cells
/// (circularly) from every peak already taken, whatever its candidate.
pub fn find_peaks(grid: &CorrelationGrid) -> Result<PeakReport> {
    let (n_cells, n_f) = (grid.n_cells(), grid.n_candidates());
    if grid.subframes_combined() == 0 || n_cells == 0 || n_f == 0 {
        return Err(Error::EmptyGrid);
    }
    if n_cells < 4 * (2 * EXCLUSION_CELLS + 1) {
        return Err(Error::param("grid", format!("{n_cells} cells cannot hold four separated peaks")));
    }
    let (values, args) = grid.cell_maxima();
    let best_per_cell: Vec<Peak> = values
        .iter()
        .zip(&args)
        .enumerate()
        .map(|(cell, (&value, &candidate))| Peak { cell, candidate, value })
        .collect();

    let mut peaks = [Peak { cell: 0, candidate: 0, value: 0.0 }; 4];
    for k in 0..4 {
        let taken = &peaks[..k];
        peaks[k] = *best_per_cell
            .iter()
            .filter(|p| {
                taken
                    .iter()
                    .all(|q| circular_distance(p.cell, q.cell, n_cells) > EXCLUSION_CELLS)
            })
            .fold(None, |a: Option<&Peak>, p| match a {
                Some(b) if b.value >= p.value => Some(b),
                _ => Some(p),
            })
            .expect("enough cells remain outside the exclusion zones");
    }
    Ok(PeakReport {
        peaks,
        grid_mean: grid.mean(),
    })
}

/// Detection thresholds (multiples of the grid mean) indexed by the number of
/// combined subframes.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTable {
    thresholds: Vec<f64>,
    fa_target: f64,
    distinctness: f64,
}

impl ThresholdTable {
    pub fn new(thresholds: Vec<f64>, fa_target: f64, distinctness: f64) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::param("thresholds", "table is empty"));
        }
        if let Some(t) = thresholds.iter().find(|t| !t.is_finite() || **t < 1.0) {
            return Err(Error::param("thresholds", format!("{t} is below the grid mean")));
        }
        if !(fa_target > 0.0 && fa_target <= 1.0) {
            return Err(Error::param("fa_target", "must lie in (0, 1]"));
        }
        if distinctness.is_nan() || distinctness < 1.0 {
            return Err(Error::param("distinctness", "must be at least 1"));
        }
        Ok(Self {
            thresholds,
            fa_target,
            distinctness,
        })
    }

    /// Table that every input passes.
    pub fn all_pass(max_subframes: usize) -> Self {
        Self {
            thresholds: vec![1.0; max_subframes.max(1)],
            fa_target: 1.0,
            distinctness: 1.0,
        }
    }

    pub fn max_subframes(&self) -> usize {
        self.thresholds.len()
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn fa_target(&self) -> f64 {
        self.fa_target
    }

    pub fn distinctness(&self) -> f64 {
        self.distinctness
    }

    /// Threshold after `subframes` combined periods; depths past the table
    /// reuse its last entry.
    pub fn threshold(&self, subframes: usize) -> f64 {
        let i = subframes.clamp(1, self.thresholds.len()) - 1;
        self.thresholds[i]
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "subframes,threshold,fa_target,distinctness")?;
        for (i, t) in self.thresholds.iter().enumerate() {
            writeln!(w, "{},{},{},{}", i + 1, t, self.fa_target, self.distinctness)?;
        }
        Ok(())
    }

    pub fn read_csv(r: impl BufRead, path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = r.lines();
        match lines.next().transpose()? {
            Some(h) if h.trim() == "subframes,threshold,fa_target,distinctness" => {}
            _ => return Err(bad("missing threshold table header".into())),
        }
        let (mut thresholds, mut fa, mut dist) = (Vec::new(), None, None);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
            if fields.len() != 4 {
                return Err(bad(format!("row {}: expected 4 fields", i + 1)));
            }
            let n: usize = fields[0].parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?;
            if n != thresholds.len() + 1 {
                return Err(bad(format!("row {}: subframe counts must run 1, 2, ...", i + 1)));
            }
            thresholds.push(parse(fields[1])?);
            fa = Some(parse(fields[2])?);
            dist = Some(parse(fields[3])?);
        }
        match (fa, dist) {
            (Some(fa), Some(dist)) => Self::new(thresholds, fa, dist).map_err(|e| bad(e.to_string())),
            _ => Err(bad("no threshold rows".into())),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), path)
    }
}

/// Four-peak decision: peak-to-mean at least the depth's threshold and the
/// strongest peak at least `distinctness` times the fourth.
pub fn decide(
    report: &PeakReport,
    table: &ThresholdTable,
    subframes: usize,
    grid: &FrequencyGrid,
) -> Option<Detection> {
    if subframes == 0 || report.grid_mean <= 0.0 {
        return None;
    }
    let ratio = report.ratio();
    if ratio < table.threshold(subframes) || report.distinctness() < table.distinctness() {
        return None;
    }
    let p = report.peaks[0];
    Some(Detection {
        theta_hat: p.cell,
        candidate: Some(p.candidate),
        f_hat_hz: grid.candidates_hz.get(p.candidate).copied(),
        metric: ratio,
        subframes_used: subframes,
    })
}

/// Per-depth thresholds from null statistics (`stats[run][depth]`): at each
/// depth the threshold sits between the `m`-th and `(m+1)`-th largest value,
/// `m = round(fa_target * runs)`, so exactly `m` calibration runs pass.
pub fn threshold_from_statistics(stats: &[Vec<f64>], fa_target: f64, distinctness: f64) -> Result<ThresholdTable> {
    let runs = stats.len();
    let depth = stats.first().map_or(0, Vec::len);
    if runs == 0 || depth == 0 {
        return Err(Error::Statistics("no calibration runs".into()));
    }
    if stats.iter().any(|s| s.len() != depth) {
        return Err(Error::Statistics("calibration runs have unequal depth".into()));
    }
    if fa_target >= 1.0 {
        return Ok(ThresholdTable::all_pass(depth));
    }
    let m = (fa_target * runs as f64).round() as usize;
    if m < MIN_TAIL_COUNT {
        return Err(Error::Statistics(format!(
            "{runs} runs leave {m} above the {:.4} quantile; need at least {MIN_TAIL_COUNT}",
            1.0 - fa_target
        )));
    }
    let mut column = vec![0.0; runs];
    let thresholds = (0..depth)
        .map(|d| {
            for (c, s) in column.iter_mut().zip(stats) {
                *c = s[d];
            }
            column.sort_by(|a, b| b.total_cmp(a));
            let (above, below) = (column[m - 1], column[m]);
            let t = if below.is_finite() { 0.5 * (above + below) } else { 1.0 };
            t.max(1.0)
        })
        .collect();
    ThresholdTable::new(thresholds, fa_target, distinctness)
}

/// What the detector sees when no NPSS is on the air.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullInput {
    pub filler: FillerPolicy,
    /// Filler power relative to the noise, as for the experiments' SNR.
    pub snr_db: f64,
}

impl Default for NullInput {
    fn default() -> Self {
        Self {
            filler: FillerPolicy::Silence,
            snr_db: f64::INFINITY,
        }
    }
}

/// ML statistics of one null run at depths `1..=max_subframes`.
pub fn ml_null_statistics(setup: &CorrelatorSetup, input: NullInput, seed: u64, max_subframes: usize, distinctness: f64) -> Vec<f64> {
    let mut null = NullStream::new(input.filler, input.snr_db, seed);
    let mut det = MlDetector::new(setup, ThresholdTable::all_pass(1));
    (0..max_subframes)
        .map(|_| {
            let x = null.next_subframe_240k();
            det.ingest(&x).expect("subframe length is fixed");
            find_peaks(&det.grid).map_or(f64::NEG_INFINITY, |r| r.statistic(distinctness))
        })
        .collect()
}

/// AC statistics (peak-to-mean) of one null run at depths `1..=max_subframes`.
pub fn ac_null_statistics(input: NullInput, seed: u64, max_subframes: usize) -> Vec<f64> {
    let mut null = NullStream::new(input.filler, input.snr_db, seed);
    let mut det = AcDetector::new(ThresholdTable::all_pass(1));
    (0..max_subframes)
        .map(|_| {
            let x = null.next_frame_1920k();
            det.ingest(&x).expect("frame length is fixed");
            det.ratio().unwrap_or(f64::NEG_INFINITY)
        })
        .collect()
}

fn check_calibration_args(noise_runs: usize, max_subframes: usize, fa_target: f64) -> Result<()> {
    if max_subframes == 0 {
        return Err(Error::param("max_subframes", "must be at least 1"));
    }
    if !(fa_target > 0.0 && fa_target <= 1.0) {
        return Err(Error::param("fa_target", "must lie in (0, 1]"));
    }
    if fa_target < 1.0 && ((fa_target * noise_runs as f64).round() as usize) < MIN_TAIL_COUNT {
        return Err(Error::Statistics(format!(
            "{noise_runs} noise runs are too few for a false-alarm target of {fa_target}"
        )));
    }
    Ok(())
}

/// ML threshold table from white-noise runs.
pub fn calibrate_threshold(noise_runs: usize, max_subframes: usize, fa_target: f64, seed: u64) -> Result<ThresholdTable> {
    calibrate_ml(noise_runs, max_subframes, fa_target, seed, NullInput::default())
}

pub fn calibrate_ml(noise_runs: usize, max_subframes: usize, fa_target: f64, seed: u64, input: NullInput) -> Result<ThresholdTable> {
    check_calibration_args(noise_runs, max_subframes, fa_target)?;
    if fa_target >= 1.0 {
        return Ok(ThresholdTable::all_pass(max_subframes));
    }
    let setup = CorrelatorSetup::standard();
    let stats: Vec<Vec<f64>> = (0..noise_runs as u64)
        .into_par_iter()
        .map(|i| {
            let s = derive_seed(seed, streams::CALIBRATION, i);
            ml_null_statistics(&setup, input, s, max_subframes, DEFAULT_DISTINCTNESS)
        })
        .collect();
    threshold_from_statistics(&stats, fa_target, DEFAULT_DISTINCTNESS)
}

pub fn calibrate_ac(noise_runs: usize, max_subframes: usize, fa_target: f64, seed: u64, input: NullInput) -> Result<ThresholdTable> {
    check_calibration_args(noise_runs, max_subframes, fa_target)?;
    if fa_target >= 1.0 {
        return Ok(ThresholdTable::all_pass(max_subframes));
    }
    let stats: Vec<Vec<f64>> = (0..noise_runs as u64)
        .into_par_iter()
        .map(|i| ac_null_statistics(input, derive_seed(seed, streams::AC_CALIBRATION, i), max_subframes))
        .collect();
    threshold_from_statistics(&stats, fa_target, 1.0)
}

/// Streaming ML detector: OLS correlation, non-coherent grid, four-peak test.
#[derive(Debug, Clone)]
pub struct MlDetector {
    stream: OlsStream,
    grid: CorrelationGrid,
    freq: FrequencyGrid,
    table: ThresholdTable,
    last_report: Option<PeakReport>,
}

impl MlDetector {
    pub fn new(setup: &CorrelatorSetup, table: ThresholdTable) -> Self {
        Self {
            stream: setup.stream(),
            grid: setup.grid_accumulator(),
            freq: setup.grid.clone(),
            table,
            last_report: None,
        }
    }

    pub fn standard(table: ThresholdTable) -> Self {
        Self::new(&CorrelatorSetup::standard(), table)
    }

    pub fn grid(&self) -> &CorrelationGrid {
        &self.grid
    }

    pub fn table(&self) -> &ThresholdTable {
        &self.table
    }

    pub fn subframes(&self) -> usize {
        self.grid.subframes_combined()
    }

    pub fn last_report(&self) -> Option<&PeakReport> {
        self.last_report.as_ref()
    }

    pub fn stream(&self) -> &OlsStream {
        &self.stream
    }

    fn ingest(&mut self, samples: &[C64]) -> Result<()> {
        if let Some(sub) = self.stream.stream_subframe(samples)? {
            self.grid.accumulate(&sub)?;
        }
        Ok(())
    }

    /// One 10 ms subframe at 240 kHz.
    pub fn step(&mut self, samples: &[C64]) -> Result<Option<Detection>> {
        self.ingest(samples)?;
        let report = find_peaks(&self.grid)?;
        // the true peak may sit in a timing cell not yet observed
        let covered = self.grid.filled_cells() == self.grid.n_cells();
        let det = covered
            .then(|| decide(&report, &self.table, self.grid.subframes_combined(), &self.freq))
            .flatten();
        self.last_report = Some(report);
        Ok(det)
    }
}

pub fn ml_detector_step(samples: &[C64], state: &mut MlDetector) -> Result<Option<Detection>> {
    state.step(samples)
}

pub const AC_LAG: usize = 137;
pub const AC_POOL: usize = 8;
const AC_TRANSITIONS: usize = NPSS_SYMBOLS - 1;

/// Weighted lag-137 auto-correlation baseline at 1.92 MHz. For a start
/// hypothesis `u` the metric is
/// `|sum_l c[l] c[l+1] sum_{k<137} r[u+o_l+k] conj(r[u+o_l+k+137])|^2`
/// over the 10 symbol transitions, accumulated per `u mod 19200` and pooled
/// 8:1 into 2,400 cells.
#[derive(Debug, Clone)]
pub struct AcDetector {
    tail: Vec<C64>,
    frames: u64,
    acc: Vec<f64>,
    table: ThresholdTable,
    offsets: [usize; AC_TRANSITIONS],
    weights: [f64; AC_TRANSITIONS],
    pooled: Vec<f64>,
}

impl AcDetector {
    pub fn new(table: ThresholdTable) -> Self {
        let all = symbol_offsets();
        let mut offsets = [0; AC_TRANSITIONS];
        offsets.copy_from_slice(&all[..AC_TRANSITIONS]);
        let weights = std::array::from_fn(|l| CODE_COVER[l] * CODE_COVER[l + 1]);
        Self {
            tail: Vec::new(),
            frames: 0,
            acc: vec![0.0; FRAME_LEN],
            table,
            offsets,
            weights,
            pooled: vec![0.0; FRAME_LEN / AC_POOL],
        }
    }

    pub fn subframes(&self) -> usize {
        self.frames as usize
    }

    /// Accumulated metric by start hypothesis `u mod 19200`.
    pub fn profile(&self) -> &[f64] {
        &self.acc
    }

    /// Metric for start hypothesis `u` of `r` (`u + 1508 <= r.len()`).
    pub fn metric_at(&self, r: &[C64], u: usize) -> f64 {
        self.offsets
            .iter()
            .zip(&self.weights)
            .map(|(&o, &w)| {
                let s: C64 = (0..AC_LAG).map(|k| r[u + o + k] * r[u + o + k + AC_LAG].conj()).sum();
                s * w
            })
            .sum::<C64>()
            .norm_sqr()
    }

    fn ingest(&mut self, frame: &[C64]) -> Result<()> {
        if frame.len() != FRAME_LEN {
            return Err(Error::Dimension {
                what: "AC frame samples",
                expected: FRAME_LEN,
                actual: frame.len(),
            });
        }
        let mut buf = std::mem::take(&mut self.tail);
        let buf_start = self.frames as i64 * FRAME_LEN as i64 - buf.len() as i64;
        buf.extend_from_slice(frame);

        // prefix sums of the lag products
        let n_prod = buf.len() - AC_LAG;
        let mut prefix = Vec::with_capacity(n_prod + 1);
        let mut run = C64::new(0.0, 0.0);
        prefix.push(run);
        for i in 0..n_prod {
            run += buf[i] * buf[i + AC_LAG].conj();
            prefix.push(run);
        }
        let n_hyp = buf.len() + 1 - WAVEFORM_LEN;
        for u in 0..n_hyp {
            let mut s = C64::new(0.0, 0.0);
            for (&o, &w) in self.offsets.iter().zip(&self.weights) {
                s += (prefix[u + o + AC_LAG] - prefix[u + o]) * w;
            }
            let abs_u = buf_start + u as i64;
            self.acc[abs_u.rem_euclid(FRAME_LEN as i64) as usize] += s.norm_sqr();
        }
        self.tail = buf.split_off(buf.len() - (WAVEFORM_LEN - 1));
        self.frames += 1;
        for (p, chunk) in self.pooled.iter_mut().zip(self.acc.chunks_exact(AC_POOL)) {
            *p = chunk.iter().copied().fold(0.0, f64::max);
        }
        Ok(())
    }

    /// Pooled peak cell and its peak-to-mean ratio.
    fn best(&self) -> Option<(usize, f64)> {
        let mean = self.pooled.iter().sum::<f64>() / self.pooled.len() as f64;
        if self.frames == 0 || mean <= 0.0 {
            return None;
        }
        let (cell, peak) = self
            .pooled
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
        Some((cell, peak / mean))
    }

    pub fn ratio(&self) -> Option<f64> {
        self.best().map(|b| b.1)
    }

    /// One 10 ms frame at 1.92 MHz.
    pub fn step(&mut self, frame: &[C64]) -> Result<Option<Detection>> {
        self.ingest(frame)?;
        let n = self.subframes();
        Ok(self.best().and_then(|(cell, ratio)| {
            (ratio >= self.table.threshold(n)).then(|| Detection {
                theta_hat: cell * AC_POOL / (FRAME_LEN / TIMING_CELLS),
                candidate: None,
                f_hat_hz: None,
                metric: ratio,
                subframes_used: n,
            })
        }))
    }
}

pub fn ac_baseline_step(frame: &[C64], state: &mut AcDetector) -> Result<Option<Detection>> {
    state.step(frame)
}

/// Circular distance between two timing cells on the 1,200-cell grid.
pub fn timing_error_cells(a: usize, b: usize) -> usize {
    circular_distance(a % TIMING_CELLS, b % TIMING_CELLS, TIMING_CELLS)
}

/// Grid cell holding an NPSS that starts at sample `q` of a 1.92 MHz frame.
pub fn truth_cell(q_1920k: usize) -> usize {
    let lag = ((q_1920k as f64 / 8.0).round() as usize) % (FRAME_LEN / 8);
    lag / 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ChannelConfig, DownlinkSimulator, FrameLayout};

    fn grid_with(values: Vec<f64>, n_cells: usize, n_f: usize) -> CorrelationGrid {
        CorrelationGrid::from_values(n_cells, n_f, values, 1).unwrap()
    }

    #[test]
    fn single_spike_and_epsilon_floor() {
        let (n_cells, n_f) = (1200, 31);
        let mut v = vec![1e-6; n_cells * n_f];
        v[100 * n_f + 5] = 1.0;
        // side lobes inside the exclusion zone must not be picked
        v[101 * n_f + 7] = 0.5;
        v[98 * n_f + 2] = 0.4;
        v[100 * n_f + 9] = 0.6;
        v[500 * n_f + 3] = 2e-6;
        let r = find_peaks(&grid_with(v, n_cells, n_f)).unwrap();
        assert_eq!((r.peaks[0].cell, r.peaks[0].candidate, r.peaks[0].value), (100, 5, 1.0));
        assert_eq!(r.peaks[1].cell, 500);
        for p in &r.peaks[1..] {
            assert!(!(98..=102).contains(&p.cell));
        }
        for w in r.peaks.windows(2) {
            assert!(w[0].value >= w[1].value);
        }
    }

    #[test]
    fn exclusion_wraps_around() {
        let (n_cells, n_f) = (1200, 1);
        let mut v = vec![0.1; n_cells];
        v[0] = 5.0;
        v[1199] = 4.0;
        v[1198] = 3.0;
        v[1197] = 2.0;
        let r = find_peaks(&grid_with(v, n_cells, n_f)).unwrap();
        assert_eq!(r.peaks[0].cell, 0);
        assert_eq!(r.peaks[1].cell, 1197);
        assert_eq!(r.peaks[2].value, 0.1);
    }

    #[test]
    fn flat_grid() {
        let g = grid_with(vec![3.0; 1200 * 31], 1200, 31);
        let r = find_peaks(&g).unwrap();
        assert!(r.peaks.iter().all(|p| p.value == 3.0));
        assert_eq!(r.grid_mean, 3.0);
        let table = ThresholdTable::new(vec![1.0001; 5], 0.01, 1.2).unwrap();
        assert_eq!(decide(&r, &table, 1, &FrequencyGrid::default()), None);
    }

    #[test]
    fn empty_grid_rejected() {
        let g = CorrelatorSetup::standard().grid_accumulator();
        assert!(matches!(find_peaks(&g), Err(Error::EmptyGrid)));
    }

    #[test]
    fn constructed_detection() {
        let (n_cells, n_f) = (1200, 31);
        // peaks[3]/mean = 1 and peak/mean = 20 (mean stays ~1 after the spike)
        let mut v = vec![1.0; n_cells * n_f];
        let spike = 20.0 * (n_cells * n_f) as f64 / ((n_cells * n_f) as f64 + 20.0 - 1.0 - 19.0 * 20.0 / 20.0);
        v[321 * n_f + 12] = spike;
        let g = grid_with(v, n_cells, n_f);
        let r = find_peaks(&g).unwrap();
        let table = ThresholdTable::new(vec![10.0; 4], 0.01, 1.2).unwrap();
        let d = decide(&r, &table, 2, &FrequencyGrid::default()).unwrap();
        assert_eq!(d.theta_hat, 321);
        assert_eq!(d.candidate, Some(12));
        assert_eq!(d.f_hat_hz, Some(-3.0 * 937.5));
        assert!(r.ratio() > 19.0);
        assert_eq!(d.subframes_used, 2);
        assert_eq!(decide(&r, &table, 0, &FrequencyGrid::default()), None);
    }

    #[test]
    fn quantile_rule_matches_sorted_oracle() {
        // statistics 1..=2000 in scrambled order, two depths
        let stats: Vec<Vec<f64>> = (0..2000u64)
            .map(|i| {
                let v = ((i * 7919) % 2000 + 1) as f64;
                vec![v, 2.0 * v]
            })
            .collect();
        let t = threshold_from_statistics(&stats, 0.01, 1.2).unwrap();
        // 20 values above: 1981..=2000, threshold midway between 1980 and 1981
        assert_eq!(t.thresholds(), &[1980.5, 3961.0]);
        let passing = stats.iter().filter(|s| s[0] >= t.threshold(1)).count();
        assert_eq!(passing, 20);
        assert!(threshold_from_statistics(&stats[..500], 0.01, 1.2).is_err());
        let all = threshold_from_statistics(&stats[..3], 1.0, 1.2).unwrap();
        assert_eq!(all, ThresholdTable::all_pass(2));
    }

    #[test]
    fn missing_distinct_runs_fall_back_to_unit_threshold() {
        let mut stats = vec![vec![f64::NEG_INFINITY]; 1000];
        for s in stats.iter_mut().take(5) {
            s[0] = 3.0;
        }
        let t = threshold_from_statistics(&stats, 0.01, 1.2).unwrap();
        assert_eq!(t.thresholds(), &[1.0]);
    }

    #[test]
    fn table_csv_roundtrip() {
        let t = ThresholdTable::new(vec![7.25, 7.0 + 1e-13, 6.5], 0.01, 1.2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = ThresholdTable::read_csv(&buf[..], Path::new("t.csv")).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.threshold(0), 7.25);
        assert_eq!(back.threshold(99), 6.5);
        assert!(ThresholdTable::read_csv(&b"x,y\n1,2\n"[..], Path::new("t.csv")).is_err());
        assert!(ThresholdTable::new(vec![0.5], 0.01, 1.2).is_err());
        assert!(ThresholdTable::new(vec![], 0.01, 1.2).is_err());
    }

    #[test]
    fn calibration_is_reproducible() {
        let a = calibrate_threshold(1000, 2, 0.01, 5).unwrap();
        let b = calibrate_threshold(1000, 2, 0.01, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.thresholds().iter().all(|&t| t > 1.0));
        assert!(matches!(calibrate_threshold(100, 2, 0.01, 5), Err(Error::Statistics(_))));
        assert_eq!(calibrate_threshold(20, 3, 1.0, 5).unwrap(), ThresholdTable::all_pass(3));
    }

    fn clean_sim(offset: usize, cfo: f64, snr_db: f64) -> DownlinkSimulator {
        let cfg = ChannelConfig {
            timing_offset_samples: Some(offset),
            cfo_hz: cfo,
            snr_db,
            seed: offset as u64 + 1,
            ..ChannelConfig::default()
        };
        DownlinkSimulator::new(FrameLayout::default(), &cfg).unwrap()
    }

    fn hard_table() -> ThresholdTable {
        ThresholdTable::new(vec![20.0; 10], 0.01, 1.2).unwrap()
    }

    #[test]
    fn ml_detects_clean_npss_in_first_complete_period() {
        for offset in [0, 4_321, 9_000, 15_000] {
            let mut sim = clean_sim(offset, 0.0, 0.0);
            let mut det = MlDetector::standard(hard_table());
            let truth = truth_cell(sim.npss_position_1920k());
            let mut found = None;
            for _ in 0..3 {
                let x = sim.next_subframe_240k();
                if let Some(d) = det.step(&x).unwrap() {
                    found = Some(d);
                    break;
                }
            }
            let d = found.expect("clean NPSS detected");
            assert!(d.subframes_used <= 2, "offset {offset}: {}", d.subframes_used);
            assert!(timing_error_cells(d.theta_hat, truth) <= 1, "offset {offset}");
            assert_eq!(d.candidate, Some(15));
        }
    }

    #[test]
    fn ml_waits_for_full_timing_coverage() {
        let mut sim = clean_sim(4_321, 0.0, 30.0);
        let mut det = MlDetector::standard(ThresholdTable::all_pass(4));
        assert!(det.step(&sim.next_subframe_240k()).unwrap().is_none());
        assert!(det.last_report().is_some());
        let d = det.step(&sim.next_subframe_240k()).unwrap().expect("covered grid decides");
        assert_eq!(d.subframes_used, 2);
    }

    #[test]
    fn ml_frequency_estimate_tracks_cfo() {
        let mut sim = clean_sim(2_000, 10_000.0, 0.0);
        let mut det = MlDetector::standard(hard_table());
        let d = (0..4)
            .find_map(|_| det.step(&sim.next_subframe_240k()).unwrap())
            .expect("detected");
        assert!((d.f_hat_hz.unwrap() - 10_000.0).abs() <= 468.75);
    }

    #[test]
    fn ac_zero_input_never_detects() {
        let mut det = AcDetector::new(ThresholdTable::all_pass(5));
        for _ in 0..3 {
            assert_eq!(det.step(&vec![C64::new(0.0, 0.0); FRAME_LEN]).unwrap(), None);
        }
        assert!(det.profile().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ac_streaming_matches_direct_metric() {
        let mut sim = clean_sim(3_000, 1_500.0, 10.0);
        let frames: Vec<Vec<C64>> = (0..2).map(|_| sim.next_frame_1920k()).collect();
        let all: Vec<C64> = frames.concat();
        let mut det = AcDetector::new(ThresholdTable::all_pass(5));
        det.ingest(&frames[0]).unwrap();
        det.ingest(&frames[1]).unwrap();
        // u in [17693, 19200) only sees frame 1's pass; u < 17693 both
        for u in [0usize, 5, 777, 12_000, 17_692] {
            let expect = det.metric_at(&all, u) + det.metric_at(&all, u + FRAME_LEN);
            assert!((det.profile()[u] - expect).abs() <= 1e-9 * expect.max(1e-12), "u={u}");
        }
        for u in [17_693usize, 19_199] {
            let expect = det.metric_at(&all, u);
            assert!((det.profile()[u] - expect).abs() <= 1e-9 * expect.max(1e-12));
        }
    }

    #[test]
    fn ac_peaks_at_npss_start() {
        for offset in [0usize, 7_777, 12_345] {
            let mut sim = clean_sim(offset, 2_000.0, f64::INFINITY);
            let mut det = AcDetector::new(ThresholdTable::new(vec![5.0; 4], 0.01, 1.0).unwrap());
            let q = sim.npss_position_1920k();
            det.ingest(&sim.next_frame_1920k()).unwrap();
            let d = det.step(&sim.next_frame_1920k()).unwrap().expect("detected");
            let peak_u = (0..FRAME_LEN).max_by(|&a, &b| det.profile()[a].total_cmp(&det.profile()[b])).unwrap();
            assert!(peak_u.abs_diff(q) <= 2 || peak_u.abs_diff(q) >= FRAME_LEN - 2, "{peak_u} vs {q}");
            assert!(timing_error_cells(d.theta_hat, q / 16) <= 1);
            assert_eq!(d.f_hat_hz, None);
        }
    }

    #[test]
    fn truth_cell_convention() {
        assert_eq!(truth_cell(0), 0);
        assert_eq!(truth_cell(15), 1);
        assert_eq!(truth_cell(16), 1);
        assert_eq!(truth_cell(19_199), 0);
        assert_eq!(timing_error_cells(1, 1199), 2);
    }
}
