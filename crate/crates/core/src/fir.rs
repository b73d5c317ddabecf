//! Linear-phase low-pass FIR design and the 1.92 MHz -> 240 kHz decimator.
//!
//! The same filter is used to build the 240 kHz reference and on the receive
//! path, so reference and received NPSS see identical shaping.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::C64;

pub const HIGH_RATE_HZ: f64 = 1_920_000.0;
pub const LOW_RATE_HZ: f64 = 240_000.0;
pub const DECIMATION: usize = 8;

const PASS_EDGE_HZ: f64 = 100_000.0;
const STOP_EDGE_HZ: f64 = 140_000.0;
const DESIGN_ATTEN_DB: f64 = 64.0;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser-window low-pass with unit DC gain and an odd number of taps.
pub fn kaiser_lowpass(pass_hz: f64, stop_hz: f64, atten_db: f64, fs: f64) -> Vec<f64> {
    let beta = if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    };
    let transition = (stop_hz - pass_hz) / fs;
    let mut len = ((atten_db - 7.95) / (14.36 * transition)).ceil() as usize + 1;
    if len.is_multiple_of(2) {
        len += 1;
    }
    let mid = (len / 2) as f64;
    let fc = 0.5 * (pass_hz + stop_hz) / fs;
    let i0_beta = bessel_i0(beta);
    let mut taps: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 - mid;
            let sinc = if t == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * t).sin() / (PI * t)
            };
            let r = t / mid;
            let w = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            sinc * w
        })
        .collect();
    let dc: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= dc;
    }
    taps
}

/// The receive-path anti-alias filter, designed once.
pub fn decimation_taps() -> &'static [f64] {
    static TAPS: OnceLock<Vec<f64>> = OnceLock::new();
    TAPS.get_or_init(|| kaiser_lowpass(PASS_EDGE_HZ, STOP_EDGE_HZ, DESIGN_ATTEN_DB, HIGH_RATE_HZ))
}

/// Sum of squared taps: output/input power ratio for white input.
pub fn noise_gain(taps: &[f64]) -> f64 {
    taps.iter().map(|t| t * t).sum()
}

/// Magnitude response at `freq_hz`.
pub fn response_at(taps: &[f64], freq_hz: f64, fs: f64) -> f64 {
    let w = 2.0 * PI * freq_hz / fs;
    taps.iter()
        .enumerate()
        .map(|(n, &h)| C64::from_polar(h, -w * n as f64))
        .sum::<C64>()
        .norm()
}

/// Streaming filter-and-downsample with the filter's group delay removed:
/// output `m` is `sum_k h[k] x[8m + D - k]` where `D = (len - 1) / 2`.
///
/// Output `m` therefore lines up with input sample `8m`; it is released once
/// input sample `8m + D` has been pushed.
#[derive(Debug, Clone)]
pub struct Decimator {
    taps: &'static [f64],
    // split real/imaginary history so the dot products vectorize
    re: Vec<f64>,
    im: Vec<f64>,
    // index into the history of the window start for the next output
    next: usize,
}

impl Default for Decimator {
    fn default() -> Self {
        Self::new()
    }
}

// Eight independent partial sums in a fixed order, so the AVX build of the
// same loop gives bit-identical results.
#[inline(always)]
fn dot_lanes(taps: &[f64], x: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let mut tc = taps.chunks_exact(8);
    let mut xc = x.chunks_exact(8);
    for (t, v) in (&mut tc).zip(&mut xc) {
        for i in 0..8 {
            acc[i] += t[i] * v[i];
        }
    }
    let tail: f64 = tc.remainder().iter().zip(xc.remainder()).map(|(t, v)| t * v).sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn dot_avx(taps: &[f64], x: &[f64]) -> f64 {
    use std::arch::x86_64::*;
    let n = taps.len().min(x.len());
    let blocks = n / 8;
    let (mut a, mut b) = (_mm256_setzero_pd(), _mm256_setzero_pd());
    for k in 0..blocks {
        // SAFETY: 8k + 8 <= n, within both slices
        let (t, v) = (taps.as_ptr().add(8 * k), x.as_ptr().add(8 * k));
        a = _mm256_add_pd(a, _mm256_mul_pd(_mm256_loadu_pd(t), _mm256_loadu_pd(v)));
        b = _mm256_add_pd(b, _mm256_mul_pd(_mm256_loadu_pd(t.add(4)), _mm256_loadu_pd(v.add(4))));
    }
    let mut s = [0.0; 4];
    _mm256_storeu_pd(s.as_mut_ptr(), _mm256_add_pd(a, b));
    let tail: f64 = taps[8 * blocks..n].iter().zip(&x[8 * blocks..n]).map(|(t, v)| t * v).sum();
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

fn dot(taps: &[f64], x: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the CPU supports AVX
        return unsafe { dot_avx(taps, x) };
    }
    dot_lanes(taps, x)
}

impl Decimator {
    pub fn new() -> Self {
        let taps = decimation_taps();
        let delay = (taps.len() - 1) / 2;
        Self {
            taps,
            re: vec![0.0; delay],
            im: vec![0.0; delay],
            next: 0,
        }
    }

    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Number of high-rate samples still needed before `count` more outputs
    /// can be released.
    pub fn samples_needed(&self, count: usize) -> usize {
        if count == 0 {
            return 0;
        }
        let end = self.next + DECIMATION * (count - 1) + self.taps.len();
        end.saturating_sub(self.re.len())
    }

    pub fn push(&mut self, x: &[C64], out: &mut Vec<C64>) {
        self.re.extend(x.iter().map(|v| v.re));
        self.im.extend(x.iter().map(|v| v.im));
        let len = self.taps.len();
        // taps are symmetric, so correlation and convolution coincide
        while self.next + len <= self.re.len() {
            let r = dot(self.taps, &self.re[self.next..self.next + len]);
            let i = dot(self.taps, &self.im[self.next..self.next + len]);
            out.push(C64::new(r, i));
            self.next += DECIMATION;
        }
        if self.next > 4 * len {
            self.re.drain(..self.next);
            self.im.drain(..self.next);
            self.next = 0;
        }
    }
}

/// Filter and keep every 8th sample; output length `floor(len / 8)`, output
/// `m` aligned with input sample `8m`. Samples past the end are taken as zero.
pub fn decimate_to_240k(x: &[C64]) -> Vec<C64> {
    let mut dec = Decimator::new();
    let n_out = x.len() / DECIMATION;
    let mut out = Vec::with_capacity(n_out + 1);
    dec.push(x, &mut out);
    let pad = dec.samples_needed(n_out.saturating_sub(out.len()));
    dec.push(&vec![C64::new(0.0, 0.0); pad], &mut out);
    out.truncate(n_out);
    out
}
