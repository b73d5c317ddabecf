//! Power-of-two DFT kernels and spectrum helpers.
//!
//! Forward transforms are unnormalized, inverse transforms carry the `1/N`
//! factor. All downstream magnitude thresholds assume this convention.

use std::ops::Index;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::C64;

/// Forward/inverse transform pair of one power-of-two size.
#[derive(Clone)]
pub struct FftPlan {
    n: usize,
    log2n: u32,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftPlan").field("n", &self.n).finish()
    }
}

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        // the planner caches plans, so repeated construction is cheap
        let mut p = planner().lock().unwrap_or_else(|e| e.into_inner());
        Ok(Self {
            n,
            log2n: n.trailing_zeros(),
            fwd: p.plan_fft_forward(n),
            inv: p.plan_fft_inverse(n),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of radix-2 butterflies in one transform, `(N/2) log2 N`.
    pub fn butterflies(&self) -> usize {
        self.n / 2 * self.log2n as usize
    }

    /// Scratch length needed by the `_with_scratch` variants.
    pub fn scratch_len(&self) -> usize {
        self.fwd.get_inplace_scratch_len().max(self.inv.get_inplace_scratch_len())
    }

    /// Unnormalized forward transform, in place.
    pub fn forward_in_place(&self, buf: &mut [C64]) {
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        self.forward_with_scratch(buf, &mut scratch);
    }

    /// Inverse transform including the `1/N` scaling, in place.
    pub fn inverse_in_place(&self, buf: &mut [C64]) {
        let mut scratch = vec![C64::new(0.0, 0.0); self.scratch_len()];
        self.inverse_with_scratch(buf, &mut scratch);
    }

    pub fn forward_with_scratch(&self, buf: &mut [C64], scratch: &mut [C64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        self.fwd.process_with_scratch(buf, scratch);
    }

    pub fn inverse_with_scratch(&self, buf: &mut [C64], scratch: &mut [C64]) {
        self.inverse_unscaled_with_scratch(buf, scratch);
        let scale = 1.0 / self.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Inverse transform without the `1/N` factor.
    pub fn inverse_unscaled_with_scratch(&self, buf: &mut [C64], scratch: &mut [C64]) {
        assert_eq!(buf.len(), self.n, "buffer length does not match plan");
        self.inv.process_with_scratch(buf, scratch);
    }
}

/// Frequency-domain vector of power-of-two length.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    bins: Vec<C64>,
}

impl Spectrum {
    pub fn from_bins(bins: Vec<C64>) -> Result<Self> {
        let n = bins.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n));
        }
        Ok(Self { bins })
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn bins(&self) -> &[C64] {
        &self.bins
    }

    pub fn into_bins(self) -> Vec<C64> {
        self.bins
    }

    pub fn conj(&self) -> Spectrum {
        Spectrum {
            bins: self.bins.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|v| v.norm_sqr()).sum()
    }
}

impl Index<usize> for Spectrum {
    type Output = C64;

    fn index(&self, m: usize) -> &C64 {
        &self.bins[m]
    }
}

/// `X[m] = sum_k x[k] exp(-j 2 pi k m / N)`.
pub fn dft_forward(x: &[C64]) -> Result<Spectrum> {
    let plan = FftPlan::new(x.len())?;
    let mut bins = x.to_vec();
    plan.forward_in_place(&mut bins);
    Ok(Spectrum { bins })
}

/// `x[k] = (1/N) sum_m X[m] exp(+j 2 pi k m / N)`.
pub fn dft_inverse(spectrum: &Spectrum) -> Vec<C64> {
    let plan = FftPlan::new(spectrum.n_bins()).expect("spectrum length is a power of two");
    let mut out = spectrum.bins.clone();
    plan.inverse_in_place(&mut out);
    out
}

/// `Y[m] = X[(m - d) mod N]`.
pub fn cyclic_shift(spectrum: &Spectrum, d: i64) -> Spectrum {
    let n = spectrum.n_bins();
    let d = d.rem_euclid(n as i64) as usize;
    let mut bins = spectrum.bins.clone();
    bins.rotate_right(d);
    Spectrum { bins }
}

pub fn pointwise_product(a: &Spectrum, b: &Spectrum) -> Result<Spectrum> {
    if a.n_bins() != b.n_bins() {
        return Err(Error::Dimension {
            what: "spectrum length",
            expected: a.n_bins(),
            actual: b.n_bins(),
        });
    }
    Ok(Spectrum {
        bins: a.bins.iter().zip(&b.bins).map(|(x, y)| x * y).collect(),
    })
}
