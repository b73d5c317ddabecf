//! NPSS generation: the Zadoff-Chu base sequence with its code cover, the
//! 1.92 MHz OFDM waveform, the 240 kHz correlation reference, the frequency
//! hypothesis grid and the bank of shifted reference spectra.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::fir::{decimate_to_240k, DECIMATION, LOW_RATE_HZ};
use crate::spectral::{cyclic_shift, dft_forward, dft_inverse, Spectrum};
use crate::C64;

pub const ZC_LEN: usize = 11;
pub const NPSS_SYMBOLS: usize = 11;
pub const CODE_COVER: [f64; NPSS_SYMBOLS] = [1., 1., 1., 1., -1., -1., 1., 1., 1., -1., 1.];

pub const OFDM_SIZE: usize = 128;
pub const CP_SHORT: usize = 9;
pub const CP_LONG: usize = 10;
/// NPSS symbol carrying the long cyclic prefix (first symbol of the second slot
/// when the NPSS fills the last 11 symbols of its subframe).
pub const LONG_CP_SYMBOL: usize = 4;

pub const WAVEFORM_LEN: usize = 10 * (OFDM_SIZE + CP_SHORT) + (OFDM_SIZE + CP_LONG);
pub const REFERENCE_LEN: usize = 189;

/// `s_freq[n][l] = exp(-j 5 pi n (n+1) / 11) * c[l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NpssFrequencySequence {
    pub s_freq: [[C64; NPSS_SYMBOLS]; ZC_LEN],
    pub code_cover: [f64; NPSS_SYMBOLS],
}

pub fn generate_npss_frequency() -> NpssFrequencySequence {
    let mut s_freq = [[C64::new(0.0, 0.0); NPSS_SYMBOLS]; ZC_LEN];
    for (n, row) in s_freq.iter_mut().enumerate() {
        let phi = -5.0 * PI * (n * (n + 1)) as f64 / ZC_LEN as f64;
        let base = C64::from_polar(1.0, phi);
        for (l, v) in row.iter_mut().enumerate() {
            *v = base * CODE_COVER[l];
        }
    }
    NpssFrequencySequence {
        s_freq,
        code_cover: CODE_COVER,
    }
}

/// Subcarrier `n` of the 12-subcarrier block sits at 128-point bin `(n - 6) mod 128`.
pub fn subcarrier_bin(n: usize) -> usize {
    (n as i64 - 6).rem_euclid(OFDM_SIZE as i64) as usize
}

pub fn cp_len(symbol: usize) -> usize {
    if symbol == LONG_CP_SYMBOL {
        CP_LONG
    } else {
        CP_SHORT
    }
}

/// Start offsets of the 11 NPSS symbols (CP included) within the waveform.
pub fn symbol_offsets() -> [usize; NPSS_SYMBOLS] {
    let mut offs = [0; NPSS_SYMBOLS];
    for l in 1..NPSS_SYMBOLS {
        offs[l] = offs[l - 1] + cp_len(l - 1) + OFDM_SIZE;
    }
    offs
}

/// One OFDM symbol with the given subcarrier values, CP prepended. Scaled so a
/// fully loaded 11-subcarrier symbol body has unit mean power.
pub fn ofdm_symbol(subcarriers: &[C64], cp: usize) -> Vec<C64> {
    let mut bins = vec![C64::new(0.0, 0.0); OFDM_SIZE];
    for (n, &v) in subcarriers.iter().enumerate() {
        bins[subcarrier_bin(n)] = v;
    }
    let spectrum = Spectrum::from_bins(bins).expect("128 is a power of two");
    let scale = OFDM_SIZE as f64 / (ZC_LEN as f64).sqrt();
    let body: Vec<C64> = dft_inverse(&spectrum).into_iter().map(|v| v * scale).collect();
    let mut out = Vec::with_capacity(cp + OFDM_SIZE);
    out.extend_from_slice(&body[OFDM_SIZE - cp..]);
    out.extend_from_slice(&body);
    out
}

pub fn build_waveform_1920k(seq: &NpssFrequencySequence) -> Vec<C64> {
    let mut wave = Vec::with_capacity(WAVEFORM_LEN);
    for l in 0..NPSS_SYMBOLS {
        let column: Vec<C64> = (0..ZC_LEN).map(|n| seq.s_freq[n][l]).collect();
        wave.extend(ofdm_symbol(&column, cp_len(l)));
    }
    debug_assert_eq!(wave.len(), WAVEFORM_LEN);
    wave
}

/// Filtered and decimated copy of the waveform, trimmed to 189 samples and
/// normalized to unit energy.
pub fn build_reference_240k(wave_1920k: &[C64]) -> Result<Vec<C64>> {
    if wave_1920k.len() != WAVEFORM_LEN {
        return Err(Error::Dimension {
            what: "1.92 MHz NPSS waveform",
            expected: WAVEFORM_LEN,
            actual: wave_1920k.len(),
        });
    }
    let mut padded = wave_1920k.to_vec();
    padded.resize(REFERENCE_LEN * DECIMATION, C64::new(0.0, 0.0));
    let mut reference = decimate_to_240k(&padded);
    reference.resize(REFERENCE_LEN, C64::new(0.0, 0.0));
    let energy: f64 = reference.iter().map(|v| v.norm_sqr()).sum();
    let scale = 1.0 / energy.sqrt();
    for v in &mut reference {
        *v *= scale;
    }
    Ok(reference)
}

/// Frequency sequence, 1.92 MHz waveform and unit-energy 240 kHz reference.
#[derive(Debug, Clone)]
pub struct NpssReference {
    pub sequence: NpssFrequencySequence,
    pub wave_1920k: Vec<C64>,
    pub ref_240k: Vec<C64>,
    /// Mean power of `wave_1920k` after the receive filter and decimation,
    /// over the NPSS-bearing samples.
    pub decimated_power: f64,
}

impl NpssReference {
    pub fn build() -> Self {
        let sequence = generate_npss_frequency();
        let wave_1920k = build_waveform_1920k(&sequence);
        let ref_240k = build_reference_240k(&wave_1920k).expect("waveform has nominal length");
        let mut padded = wave_1920k.clone();
        padded.resize(REFERENCE_LEN * DECIMATION, C64::new(0.0, 0.0));
        let dec = decimate_to_240k(&padded);
        let decimated_power =
            dec.iter().map(|v| v.norm_sqr()).sum::<f64>() * DECIMATION as f64 / WAVEFORM_LEN as f64;
        Self {
            sequence,
            wave_1920k,
            ref_240k,
            decimated_power,
        }
    }

    /// Shared, lazily built instance.
    pub fn standard() -> &'static NpssReference {
        static REF: OnceLock<NpssReference> = OnceLock::new();
        REF.get_or_init(NpssReference::build)
    }

    /// Mean power of the 1.92 MHz waveform.
    pub fn waveform_power(&self) -> f64 {
        self.wave_1920k.iter().map(|v| v.norm_sqr()).sum::<f64>() / self.wave_1920k.len() as f64
    }
}

/// Symmetric grid of CFO hypotheses spaced `bin_step` FFT bins apart.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    pub n_candidates: usize,
    pub bin_step: usize,
    pub fft_size: usize,
    pub sample_rate_hz: f64,
    pub base_spacing_hz: f64,
    pub candidates_hz: Vec<f64>,
    pub candidate_bin_shifts: Vec<i64>,
}

pub const DEFAULT_CANDIDATES: usize = 31;
pub const DEFAULT_BIN_STEP: usize = 4;
pub const DEFAULT_FFT_SIZE: usize = 1024;

pub fn frequency_grid(
    n_candidates: usize,
    bin_step: usize,
    fft_size: usize,
    sample_rate_hz: f64,
) -> Result<FrequencyGrid> {
    if n_candidates == 0 || n_candidates.is_multiple_of(2) {
        return Err(Error::param(
            "n_candidates",
            format!("{n_candidates} must be odd so the grid is symmetric about 0 Hz"),
        ));
    }
    if bin_step == 0 {
        return Err(Error::param("bin_step", "must be at least 1"));
    }
    if fft_size < 2 || !fft_size.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(fft_size));
    }
    if sample_rate_hz <= 0.0 || !sample_rate_hz.is_finite() {
        return Err(Error::param("sample_rate_hz", "must be positive"));
    }
    let base_spacing_hz = sample_rate_hz / fft_size as f64;
    let half = (n_candidates / 2) as i64;
    let candidate_bin_shifts: Vec<i64> = (0..n_candidates as i64)
        .map(|i| (i - half) * bin_step as i64)
        .collect();
    let candidates_hz = candidate_bin_shifts
        .iter()
        .map(|&d| d as f64 * base_spacing_hz)
        .collect();
    Ok(FrequencyGrid {
        n_candidates,
        bin_step,
        fft_size,
        sample_rate_hz,
        base_spacing_hz,
        candidates_hz,
        candidate_bin_shifts,
    })
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        frequency_grid(DEFAULT_CANDIDATES, DEFAULT_BIN_STEP, DEFAULT_FFT_SIZE, LOW_RATE_HZ)
            .expect("default grid parameters are valid")
    }
}

impl FrequencyGrid {
    pub fn spacing_hz(&self) -> f64 {
        self.bin_step as f64 * self.base_spacing_hz
    }

    /// Largest |CFO| still within half a spacing of some candidate.
    pub fn coverage_hz(&self) -> f64 {
        self.candidates_hz[self.n_candidates - 1] + 0.5 * self.spacing_hz()
    }

    pub fn nearest_candidate(&self, f_hz: f64) -> usize {
        let half = (self.n_candidates / 2) as f64;
        let idx = (f_hz / self.spacing_hz()).round() + half;
        idx.clamp(0.0, (self.n_candidates - 1) as f64) as usize
    }
}

/// Conjugated reference spectra, one row per frequency candidate.
#[derive(Debug, Clone)]
pub struct ReferenceBank {
    pub spectra: Vec<Spectrum>,
    pub fft_size: usize,
}

/// Row `i` is the conjugate reference spectrum rotated by the candidate's bin
/// shift, i.e. the spectrum of `conj(s[k] exp(+j 2 pi f_i k / fs))`. Multiplying
/// a block spectrum by it and inverting yields the frequency-compensated
/// correlation with the window-local phasor.
pub fn reference_bank(ref_240k: &[C64], grid: &FrequencyGrid, fft_size: usize) -> Result<ReferenceBank> {
    if fft_size < ref_240k.len() {
        return Err(Error::param(
            "fft_size",
            format!("{fft_size} shorter than the {}-sample reference", ref_240k.len()),
        ));
    }
    if grid.fft_size != fft_size {
        return Err(Error::Dimension {
            what: "grid fft size",
            expected: fft_size,
            actual: grid.fft_size,
        });
    }
    let mut padded = ref_240k.to_vec();
    padded.resize(fft_size, C64::new(0.0, 0.0));
    let center = dft_forward(&padded)?.conj();
    let spectra = grid
        .candidate_bin_shifts
        .iter()
        .map(|&d| cyclic_shift(&center, d))
        .collect();
    Ok(ReferenceBank { spectra, fft_size })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn zc_entries() {
        let seq = generate_npss_frequency();
        assert!(close(seq.s_freq[0][0], C64::new(1.0, 0.0), 1e-15));
        assert!(close(seq.s_freq[0][4], C64::new(-1.0, 0.0), 1e-15));
        // exp(-j 10 pi / 11)
        assert!(close(seq.s_freq[1][0], C64::new(-0.959_492_973_614_497_4, -0.281_732_556_841_429_7), 1e-12));
        for n in 0..ZC_LEN {
            for l in 0..NPSS_SYMBOLS {
                assert!((seq.s_freq[n][l].norm() - 1.0).abs() < 1e-12);
                assert!(close(seq.s_freq[n][l], seq.s_freq[n][0] * CODE_COVER[l] / CODE_COVER[0], 1e-15));
            }
        }
        assert_eq!(seq.code_cover, [1., 1., 1., 1., -1., -1., 1., 1., 1., -1., 1.]);
    }

    #[test]
    fn waveform_layout() {
        let wave = build_waveform_1920k(&generate_npss_frequency());
        assert_eq!(wave.len(), 1_508);
        let offs = symbol_offsets();
        let mut body_energy = Vec::new();
        for l in 0..NPSS_SYMBOLS {
            let cp = cp_len(l);
            let sym = &wave[offs[l]..offs[l] + cp + OFDM_SIZE];
            for i in 0..cp {
                assert_eq!(sym[i], sym[OFDM_SIZE + i]);
            }
            body_energy.push(sym[cp..].iter().map(|v| v.norm_sqr()).sum::<f64>());
        }
        for e in &body_energy {
            assert!((e - body_energy[0]).abs() < 1e-9 * body_energy[0]);
        }
        // unit mean power per body sample
        assert!((body_energy[0] / OFDM_SIZE as f64 - 1.0).abs() < 1e-12);
        assert_eq!(offs[NPSS_SYMBOLS - 1] + CP_SHORT + OFDM_SIZE, WAVEFORM_LEN);
    }

    #[test]
    fn reference_is_unit_energy_189() {
        let r = NpssReference::standard();
        assert_eq!(r.ref_240k.len(), 189);
        let e: f64 = r.ref_240k.iter().map(|v| v.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-12);
        assert!(r.decimated_power > 0.9 && r.decimated_power < 1.1);
        assert!(build_reference_240k(&r.wave_1920k[..100]).is_err());
    }

    #[test]
    fn grid_defaults() {
        let g = FrequencyGrid::default();
        assert_eq!(g.n_candidates, 31);
        assert_eq!(g.base_spacing_hz, 234.375);
        assert_eq!(g.candidates_hz[15], 0.0);
        assert_eq!(g.candidates_hz[30], 14_062.5);
        assert_eq!(g.candidates_hz[0], -14_062.5);
        assert_eq!(g.spacing_hz(), 937.5);
        assert_eq!(g.coverage_hz(), 14_531.25);
        assert_eq!(g.candidate_bin_shifts[30], 60);
        assert_eq!(g.nearest_candidate(10_000.0), 26);
        assert!(frequency_grid(30, 4, 1024, 240_000.0).is_err());
        assert!(frequency_grid(31, 4, 1000, 240_000.0).is_err());
    }

    #[test]
    fn bank_rows_are_rotations() {
        let r = NpssReference::standard();
        let g = FrequencyGrid::default();
        let bank = reference_bank(&r.ref_240k, &g, 1024).unwrap();
        let mut padded = r.ref_240k.clone();
        padded.resize(1024, C64::new(0.0, 0.0));
        let center = dft_forward(&padded).unwrap().conj();
        assert_eq!(bank.spectra[15], center);
        for m in 0..1024 {
            assert_eq!(bank.spectra[16][(m + 4) % 1024], bank.spectra[15][m]);
        }
        let e0 = bank.spectra[0].energy();
        for row in &bank.spectra {
            assert!((row.energy() - e0).abs() < 1e-9 * e0);
        }
        assert!(reference_bank(&r.ref_240k, &g, 128).is_err());
    }
}
