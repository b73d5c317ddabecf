//! Downlink synthesis and impairments at 1.92 MHz: frame construction with the
//! NPSS and OFDM filler, timing offset, carrier frequency offset, tapped
//! delay-line Rayleigh fading, AWGN and decimation to the 240 kHz coarse rate.
//!
//! All stages are streaming and seeded, so a `(config, seed)` pair fully
//! determines the received sample stream.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fir::{decimation_taps, noise_gain, Decimator, DECIMATION, HIGH_RATE_HZ};
use crate::npss::{ofdm_symbol, NpssReference, CP_LONG, CP_SHORT, WAVEFORM_LEN, ZC_LEN};
use crate::rng::{rng_for, streams, SimRng};
use crate::C64;

pub const FRAME_LEN: usize = 19_200;
pub const SUBFRAME_1MS_LEN: usize = 1_920;
pub const SYMBOLS_PER_1MS: usize = 14;
pub const FILLER_SUBCARRIERS: usize = 12;
/// NPSS in subframe 5, filling its last 11 symbols.
pub const DEFAULT_NPSS_START: usize = 5 * SUBFRAME_1MS_LEN + (CP_LONG + 128) + 2 * (CP_SHORT + 128);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FillerPolicy {
    RandomQpskOfdm,
    Silence,
}

impl std::str::FromStr for FillerPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_qpsk_ofdm" | "qpsk" => Ok(Self::RandomQpskOfdm),
            "silence" => Ok(Self::Silence),
            other => Err(Error::param("filler", format!("unknown policy `{other}`"))),
        }
    }
}

impl std::fmt::Display for FillerPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::RandomQpskOfdm => "random_qpsk_ofdm",
            Self::Silence => "silence",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayout {
    pub npss_start: usize,
    pub filler: FillerPolicy,
}

impl Default for FrameLayout {
    fn default() -> Self {
        Self {
            npss_start: DEFAULT_NPSS_START,
            filler: FillerPolicy::RandomQpskOfdm,
        }
    }
}

impl FrameLayout {
    pub fn validate(&self) -> Result<()> {
        if self.npss_start + WAVEFORM_LEN > FRAME_LEN {
            return Err(Error::param(
                "npss_start",
                format!("{} leaves no room for the NPSS in a {FRAME_LEN}-sample frame", self.npss_start),
            ));
        }
        Ok(())
    }
}

/// Transmit-side frame generator.
#[derive(Debug, Clone)]
pub struct FrameSynth {
    layout: FrameLayout,
    rng: SimRng,
}

impl FrameSynth {
    pub fn new(layout: FrameLayout, seed: u64) -> Result<Self> {
        layout.validate()?;
        Ok(Self {
            layout,
            rng: rng_for(seed, streams::FILLER, 0),
        })
    }

    pub fn next_frame(&mut self) -> Vec<C64> {
        let mut frame = self.next_filler_frame();
        let wave = &NpssReference::standard().wave_1920k;
        frame[self.layout.npss_start..self.layout.npss_start + WAVEFORM_LEN].copy_from_slice(wave);
        frame
    }

    /// A frame without the NPSS.
    pub fn next_filler_frame(&mut self) -> Vec<C64> {
        if self.layout.filler == FillerPolicy::Silence {
            return vec![C64::new(0.0, 0.0); FRAME_LEN];
        }
        // 12 unit subcarriers scaled to the NPSS's 11-subcarrier power
        let amp = (ZC_LEN as f64 / FILLER_SUBCARRIERS as f64).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
        let mut frame = Vec::with_capacity(FRAME_LEN);
        let mut sc = [C64::new(0.0, 0.0); FILLER_SUBCARRIERS];
        for _ in 0..FRAME_LEN / SUBFRAME_1MS_LEN {
            for sym in 0..SYMBOLS_PER_1MS {
                for v in sc.iter_mut() {
                    let bits: u8 = self.rng.random_range(0..4);
                    let re = if bits & 1 == 0 { amp } else { -amp };
                    let im = if bits & 2 == 0 { amp } else { -amp };
                    *v = C64::new(re, im);
                }
                let cp = if sym % 7 == 0 { CP_LONG } else { CP_SHORT };
                frame.extend(ofdm_symbol(&sc, cp));
            }
        }
        debug_assert_eq!(frame.len(), FRAME_LEN);
        frame
    }
}

pub fn synthesize_stream(layout: &FrameLayout, n_frames: usize, seed: u64) -> Result<Vec<C64>> {
    if n_frames == 0 {
        return Err(Error::param("n_frames", "must be at least 1"));
    }
    let mut synth = FrameSynth::new(layout.clone(), seed)?;
    let mut out = Vec::with_capacity(n_frames * FRAME_LEN);
    for _ in 0..n_frames {
        out.extend(synth.next_frame());
    }
    Ok(out)
}

/// Phase-continuous frequency shift `y[k] = x[k] exp(+j 2 pi f k / fs)`.
#[derive(Debug, Clone)]
pub struct CfoRotator {
    cycles_per_sample: f64,
    n: u64,
}

impl CfoRotator {
    pub fn new(cfo_hz: f64, sample_rate: f64) -> Self {
        Self {
            cycles_per_sample: cfo_hz / sample_rate,
            n: 0,
        }
    }

    fn phasor(&self, n: u64) -> C64 {
        let cycles = (self.cycles_per_sample * n as f64).fract();
        C64::from_polar(1.0, 2.0 * PI * cycles)
    }

    pub fn apply(&mut self, x: &mut [C64]) {
        if self.cycles_per_sample == 0.0 {
            self.n += x.len() as u64;
            return;
        }
        let step = C64::from_polar(1.0, 2.0 * PI * self.cycles_per_sample);
        // recursive rotation, re-anchored exactly every 256 samples
        for chunk in x.chunks_mut(256) {
            let mut p = self.phasor(self.n);
            for v in chunk.iter_mut() {
                *v *= p;
                p *= step;
            }
            self.n += chunk.len() as u64;
        }
    }
}

pub fn apply_cfo(x: &[C64], cfo_hz: f64, sample_rate: f64) -> Vec<C64> {
    let mut y = x.to_vec();
    CfoRotator::new(cfo_hz, sample_rate).apply(&mut y);
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    pub delay_samples: usize,
    /// linear power
    pub power: f64,
    /// Rayleigh-fading when true, a fixed unit-phase gain otherwise.
    pub fading: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TdlProfile {
    pub taps: Vec<Tap>,
}

pub const TU_DELAYS_US: [f64; 6] = [0.0, 0.2, 0.5, 1.6, 2.3, 5.0];
pub const TU_POWERS_DB: [f64; 6] = [-3.0, 0.0, -2.0, -6.0, -8.0, -10.0];

impl TdlProfile {
    /// Six-tap Typical Urban profile, delays rounded to the sample grid and
    /// powers normalized to unit sum.
    pub fn typical_urban(sample_rate: f64) -> Self {
        let total: f64 = TU_POWERS_DB.iter().map(|p| 10f64.powf(p / 10.0)).sum();
        let taps = TU_DELAYS_US
            .iter()
            .zip(TU_POWERS_DB)
            .map(|(&d, p)| Tap {
                delay_samples: (d * 1e-6 * sample_rate).round() as usize,
                power: 10f64.powf(p / 10.0) / total,
                fading: true,
            })
            .collect();
        Self { taps }
    }

    pub fn single_static(delay_samples: usize) -> Self {
        Self {
            taps: vec![Tap {
                delay_samples,
                power: 1.0,
                fading: false,
            }],
        }
    }

    pub fn max_delay(&self) -> usize {
        self.taps.iter().map(|t| t.delay_samples).max().unwrap_or(0)
    }
}

const SINUSOIDS_PER_TAP: usize = 16;
const GAIN_UPDATE_INTERVAL: usize = 128;

#[derive(Debug, Clone)]
struct TapState {
    delay: usize,
    amp: f64,
    // (radians per sample, initial phase); empty for a static tap
    sinusoids: Vec<(f64, f64)>,
}

impl TapState {
    fn gain(&self, n: u64) -> C64 {
        if self.sinusoids.is_empty() {
            return C64::new(self.amp, 0.0);
        }
        let t = n as f64;
        let sum: C64 = self
            .sinusoids
            .iter()
            .map(|&(w, phi)| C64::from_polar(1.0, (w * t).rem_euclid(2.0 * PI) + phi))
            .sum();
        sum * (self.amp / (self.sinusoids.len() as f64).sqrt())
    }
}

/// Tapped delay line with sum-of-sinusoids Rayleigh taps (isotropic
/// scattering, maximum Doppler `doppler_hz`). Tap gains are refreshed every
/// 128 samples.
#[derive(Debug, Clone)]
pub struct FadingChannel {
    taps: Vec<TapState>,
    history: Vec<C64>,
    n: u64,
}

impl FadingChannel {
    pub fn new(profile: &TdlProfile, doppler_hz: f64, seed: u64, sample_rate: f64) -> Self {
        let mut rng = rng_for(seed, streams::FADING, 0);
        let taps = profile
            .taps
            .iter()
            .map(|tap| {
                let sinusoids = if tap.fading {
                    let theta: f64 = rng.random_range(0.0..2.0 * PI);
                    (0..SINUSOIDS_PER_TAP)
                        .map(|m| {
                            let alpha = (2.0 * PI * m as f64 + theta) / SINUSOIDS_PER_TAP as f64;
                            let w = 2.0 * PI * doppler_hz * alpha.cos() / sample_rate;
                            (w, rng.random_range(0.0..2.0 * PI))
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                TapState {
                    delay: tap.delay_samples,
                    amp: tap.power.sqrt(),
                    sinusoids,
                }
            })
            .collect();
        Self {
            taps,
            history: vec![C64::new(0.0, 0.0); profile.max_delay()],
            n: 0,
        }
    }

    pub fn apply(&mut self, x: &[C64]) -> Vec<C64> {
        let hist_len = self.history.len();
        let mut ext = Vec::with_capacity(hist_len + x.len());
        ext.extend_from_slice(&self.history);
        ext.extend_from_slice(x);
        let mut y = vec![C64::new(0.0, 0.0); x.len()];
        let mut start = 0;
        while start < x.len() {
            // chunks aligned to absolute sample count
            let offset = (self.n % GAIN_UPDATE_INTERVAL as u64) as usize;
            let end = (start + GAIN_UPDATE_INTERVAL - offset).min(x.len());
            for tap in &self.taps {
                let g = tap.gain(self.n - offset as u64);
                let src = &ext[hist_len + start - tap.delay..hist_len + end - tap.delay];
                for (out, v) in y[start..end].iter_mut().zip(src) {
                    *out += v * g;
                }
            }
            self.n += (end - start) as u64;
            start = end;
        }
        let tail = ext.len() - hist_len;
        self.history.copy_from_slice(&ext[tail..]);
        y
    }
}

pub fn tdl_filter(x: &[C64], profile: &TdlProfile, doppler_hz: f64, seed: u64, sample_rate: f64) -> Vec<C64> {
    FadingChannel::new(profile, doppler_hz, seed, sample_rate).apply(x)
}

pub fn tu_fading(x: &[C64], doppler_hz: f64, seed: u64, sample_rate: f64) -> Vec<C64> {
    tdl_filter(x, &TdlProfile::typical_urban(sample_rate), doppler_hz, seed, sample_rate)
}

/// Circular complex Gaussian noise of a given total power per sample.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    sigma: f64,
    rng: SimRng,
}

impl NoiseSource {
    pub fn new(power: f64, seed: u64) -> Self {
        Self {
            sigma: (power / 2.0).sqrt(),
            rng: rng_for(seed, streams::NOISE, 0),
        }
    }

    /// Noise for a 1.92 MHz stream such that, after the receive filter,
    /// `signal_power / noise_power = 10^(snr_db/10)`.
    pub fn for_snr(inband_signal_power: f64, snr_db: f64, seed: u64) -> Self {
        let snr = 10f64.powf(snr_db / 10.0);
        let power = inband_signal_power / (snr * noise_gain(decimation_taps()));
        Self::new(power, seed)
    }

    pub fn power(&self) -> f64 {
        2.0 * self.sigma * self.sigma
    }

    pub fn add(&mut self, x: &mut [C64]) {
        for v in x.iter_mut() {
            let re: f64 = self.rng.sample(StandardNormal);
            let im: f64 = self.rng.sample(StandardNormal);
            *v += C64::new(re * self.sigma, im * self.sigma);
        }
    }

    pub fn samples(&mut self, n: usize) -> Vec<C64> {
        let mut x = vec![C64::new(0.0, 0.0); n];
        self.add(&mut x);
        x
    }
}

/// In-band (post-receive-filter) power of `x` averaged over its nonzero
/// samples.
pub fn inband_power(x: &[C64]) -> f64 {
    let active = x.iter().filter(|v| v.norm_sqr() > 0.0).count();
    if active == 0 {
        return 0.0;
    }
    let y = crate::fir::decimate_to_240k(x);
    y.iter().map(|v| v.norm_sqr()).sum::<f64>() * DECIMATION as f64 / active as f64
}

/// Adds noise at `snr_db`, measured after the receive filter against the
/// in-band power of the signal-bearing samples. `snr_db = +inf` returns `x`.
pub fn awgn(x: &[C64], snr_db: f64, seed: u64) -> Result<Vec<C64>> {
    let p = inband_power(x);
    if p <= 0.0 {
        return Err(Error::param("x", "input has zero power"));
    }
    let mut y = x.to_vec();
    if snr_db == f64::INFINITY {
        return Ok(y);
    }
    NoiseSource::for_snr(p, snr_db, seed).add(&mut y);
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    AwgnOnly,
    TuFading,
}

impl std::str::FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awgn_only" | "awgn" => Ok(Self::AwgnOnly),
            "tu_fading" | "tu" => Ok(Self::TuFading),
            other => Err(Error::param("channel", format!("unknown channel `{other}`"))),
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::AwgnOnly => "awgn_only",
            Self::TuFading => "tu_fading",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    /// `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub cfo_hz: f64,
    /// Drawn uniformly over one frame when `None`.
    pub timing_offset_samples: Option<usize>,
    pub channel_kind: ChannelKind,
    pub doppler_hz: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            snr_db: f64::INFINITY,
            cfo_hz: 0.0,
            timing_offset_samples: None,
            channel_kind: ChannelKind::AwgnOnly,
            doppler_hz: 2.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    /// Whether the CFO lies within the default hypothesis grid's coverage.
    pub fn cfo_in_grid(&self) -> bool {
        self.cfo_hz.abs() <= crate::npss::FrequencyGrid::default().coverage_hz()
    }
}

/// Streaming received-signal generator.
#[derive(Debug, Clone)]
pub struct DownlinkSimulator {
    synth: FrameSynth,
    tx: Vec<C64>,
    cfo: CfoRotator,
    fading: Option<FadingChannel>,
    noise: Option<NoiseSource>,
    decimator: Decimator,
    low_rate: Vec<C64>,
    timing_offset: usize,
    npss_position: usize,
}

impl DownlinkSimulator {
    pub fn new(layout: FrameLayout, cfg: &ChannelConfig) -> Result<Self> {
        let timing_offset = match cfg.timing_offset_samples {
            Some(t) if t >= FRAME_LEN => {
                return Err(Error::param("timing_offset_samples", "must be below one frame"))
            }
            Some(t) => t,
            None => rng_for(cfg.seed, streams::TRIAL, 0).random_range(0..FRAME_LEN),
        };
        let npss_position = (layout.npss_start + timing_offset) % FRAME_LEN;
        let mut synth = FrameSynth::new(layout, cfg.seed)?;
        // the receiver starts `timing_offset` samples before a transmit frame
        let first = synth.next_frame();
        let tx = first[FRAME_LEN - timing_offset..].to_vec();
        let fading = match cfg.channel_kind {
            ChannelKind::AwgnOnly => None,
            ChannelKind::TuFading => Some(FadingChannel::new(
                &TdlProfile::typical_urban(HIGH_RATE_HZ),
                cfg.doppler_hz,
                cfg.seed,
                HIGH_RATE_HZ,
            )),
        };
        let noise = if cfg.snr_db.is_finite() {
            let p = NpssReference::standard().decimated_power;
            Some(NoiseSource::for_snr(p, cfg.snr_db, cfg.seed))
        } else if cfg.snr_db == f64::INFINITY {
            None
        } else {
            return Err(Error::param("snr_db", "must be finite or +inf"));
        };
        Ok(Self {
            synth,
            tx,
            cfo: CfoRotator::new(cfg.cfo_hz, HIGH_RATE_HZ),
            fading,
            noise,
            decimator: Decimator::new(),
            low_rate: Vec::new(),
            timing_offset,
            npss_position,
        })
    }

    pub fn timing_offset(&self) -> usize {
        self.timing_offset
    }

    /// Start of every NPSS within each 19,200-sample received frame.
    pub fn npss_position_1920k(&self) -> usize {
        self.npss_position
    }

    /// NPSS start on the 240 kHz lag axis (fractional when not a multiple of 8).
    pub fn npss_lag_240k(&self) -> f64 {
        self.npss_position as f64 / DECIMATION as f64
    }

    /// Next 10 ms of received samples at 1.92 MHz.
    pub fn next_frame_1920k(&mut self) -> Vec<C64> {
        while self.tx.len() < FRAME_LEN {
            let f = self.synth.next_frame();
            self.tx.extend(f);
        }
        let mut x: Vec<C64> = self.tx.drain(..FRAME_LEN).collect();
        self.cfo.apply(&mut x);
        if let Some(f) = self.fading.as_mut() {
            x = f.apply(&x);
        }
        if let Some(n) = self.noise.as_mut() {
            n.add(&mut x);
        }
        x
    }

    /// Next 10 ms at 240 kHz (2,400 samples).
    pub fn next_subframe_240k(&mut self) -> Vec<C64> {
        let ns = FRAME_LEN / DECIMATION;
        while self.low_rate.len() < ns {
            let x = self.next_frame_1920k();
            self.decimator.push(&x, &mut self.low_rate);
        }
        self.low_rate.drain(..ns).collect()
    }
}

/// Signal-free input for threshold calibration: unit-power white noise at
/// 1.92 MHz, optionally with NPSS-free filler frames at `snr_db` below it.
#[derive(Debug, Clone)]
pub struct NullStream {
    filler: Option<FrameSynth>,
    noise: NoiseSource,
    decimator: Decimator,
    low_rate: Vec<C64>,
}

impl NullStream {
    pub fn new(filler: FillerPolicy, snr_db: f64, seed: u64) -> Self {
        let with_filler = filler == FillerPolicy::RandomQpskOfdm && snr_db.is_finite();
        let noise = if with_filler {
            NoiseSource::for_snr(NpssReference::standard().decimated_power, snr_db, seed)
        } else {
            NoiseSource::new(1.0, seed)
        };
        let filler = with_filler.then(|| {
            FrameSynth::new(FrameLayout::default(), seed).expect("default layout is valid")
        });
        Self {
            filler,
            noise,
            decimator: Decimator::new(),
            low_rate: Vec::new(),
        }
    }

    /// Pure white noise.
    pub fn noise_only(seed: u64) -> Self {
        Self::new(FillerPolicy::Silence, f64::INFINITY, seed)
    }

    pub fn next_frame_1920k(&mut self) -> Vec<C64> {
        let mut x = match self.filler.as_mut() {
            Some(f) => f.next_filler_frame(),
            None => vec![C64::new(0.0, 0.0); FRAME_LEN],
        };
        self.noise.add(&mut x);
        x
    }

    pub fn next_subframe_240k(&mut self) -> Vec<C64> {
        let ns = FRAME_LEN / DECIMATION;
        while self.low_rate.len() < ns {
            let x = self.next_frame_1920k();
            self.decimator.push(&x, &mut self.low_rate);
        }
        self.low_rate.drain(..ns).collect()
    }
}
