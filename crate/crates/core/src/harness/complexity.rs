//! Analytic operation counts for the overlap-save correlator.

use std::io::Write;

use crate::npss::FrequencyGrid;
use crate::olscorr::OlsConfig;

pub const COUNTING_CONVENTION: &str =
    "complex multiply = 4 real mul + 2 real add; radix-2 butterfly = 1 complex multiply + 2 complex adds; complex add = 2 real add";

/// Figures quoted for the reference implementation.
pub const PAPER_REAL_ADD_MOPS: f64 = 135.0;
pub const PAPER_REAL_MUL_MOPS: f64 = 135.4;
pub const PAPER_TOTAL_MOPS: f64 = 270.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityReport {
    pub fft_size: usize,
    pub step: usize,
    pub n_candidates: usize,
    pub samples_per_subframe: usize,
    pub reference_len: usize,
    pub direct_correlations_per_subframe: usize,
    pub fft_rate_per_s: f64,
    pub ifft_rate_per_s: f64,
    pub radix2_per_transform: usize,
    pub radix2_fft_ops_per_s: f64,
    pub radix2_ifft_ops_per_s: f64,
    pub pointwise_cmul_per_s: f64,
    pub real_add_mops: f64,
    pub real_mul_mops: f64,
    pub counting_convention: &'static str,
}

impl ComplexityReport {
    pub fn total_mops(&self) -> f64 {
        self.real_add_mops + self.real_mul_mops
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "metric,value,reference_value")?;
        let rows: [(&str, f64, Option<f64>); 14] = [
            ("fft_size", self.fft_size as f64, Some(1024.0)),
            ("block_step", self.step as f64, None),
            ("n_candidates", self.n_candidates as f64, Some(31.0)),
            ("samples_per_subframe", self.samples_per_subframe as f64, Some(2400.0)),
            ("reference_len", self.reference_len as f64, Some(189.0)),
            ("direct_correlations_per_subframe", self.direct_correlations_per_subframe as f64, Some(74_400.0)),
            ("fft_rate_per_s", self.fft_rate_per_s, Some(287.1)),
            ("ifft_rate_per_s", self.ifft_rate_per_s, None),
            ("radix2_fft_ops_per_s", self.radix2_fft_ops_per_s, Some(1.5e6)),
            ("radix2_ifft_ops_per_s", self.radix2_ifft_ops_per_s, Some(45.6e6)),
            ("pointwise_cmul_per_s", self.pointwise_cmul_per_s, None),
            ("real_add_mops", self.real_add_mops, Some(PAPER_REAL_ADD_MOPS)),
            ("real_mul_mops", self.real_mul_mops, Some(PAPER_REAL_MUL_MOPS)),
            ("total_mops", self.total_mops(), Some(PAPER_TOTAL_MOPS)),
        ];
        for (name, v, reference) in rows {
            match reference {
                Some(r) => writeln!(w, "{name},{v},{r}")?,
                None => writeln!(w, "{name},{v},")?,
            }
        }
        writeln!(w, "counting_convention,{},", self.counting_convention)
    }
}

pub fn complexity(cfg: &OlsConfig, grid: &FrequencyGrid) -> ComplexityReport {
    let n = cfg.fft_size;
    let nf = grid.n_candidates as f64;
    let fft_rate = grid.sample_rate_hz / cfg.step() as f64;
    let ifft_rate = nf * fft_rate;
    let radix2 = n / 2 * n.trailing_zeros() as usize;
    let fft_ops = fft_rate * radix2 as f64;
    let ifft_ops = ifft_rate * radix2 as f64;
    let cmul = nf * n as f64 * fft_rate;
    let butterflies = fft_ops + ifft_ops;
    // butterfly: 4 mul + 2 add for the twiddle product, 4 add for the two complex adds
    let mul = 4.0 * butterflies + 4.0 * cmul;
    let add = 6.0 * butterflies + 2.0 * cmul;
    ComplexityReport {
        fft_size: n,
        step: cfg.step(),
        n_candidates: grid.n_candidates,
        samples_per_subframe: cfg.samples_per_subframe,
        reference_len: cfg.reference_len(),
        direct_correlations_per_subframe: cfg.samples_per_subframe * grid.n_candidates,
        fft_rate_per_s: fft_rate,
        ifft_rate_per_s: ifft_rate,
        radix2_per_transform: radix2,
        radix2_fft_ops_per_s: fft_ops,
        radix2_ifft_ops_per_s: ifft_ops,
        pointwise_cmul_per_s: cmul,
        real_add_mops: add / 1e6,
        real_mul_mops: mul / 1e6,
        counting_convention: COUNTING_CONVENTION,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_rates() {
        let r = complexity(&OlsConfig::default(), &FrequencyGrid::default());
        assert!((r.fft_rate_per_s - 240_000.0 / 836.0).abs() < 1e-9);
        assert!((r.ifft_rate_per_s - 31.0 * r.fft_rate_per_s).abs() < 1e-9);
        assert_eq!(r.radix2_per_transform, 5_120);
        assert!((r.radix2_fft_ops_per_s / 1.5e6 - 1.0).abs() < 0.03);
        assert!((r.radix2_ifft_ops_per_s / 45.6e6 - 1.0).abs() < 0.01);
        assert_eq!(r.direct_correlations_per_subframe, 74_400);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,value,reference_value\n"));
        assert!(text.contains("total_mops,"));
    }

    #[test]
    fn op_totals_follow_convention() {
        let r = complexity(&OlsConfig::default(), &FrequencyGrid::default());
        let b = r.radix2_fft_ops_per_s + r.radix2_ifft_ops_per_s;
        assert!((r.real_mul_mops * 1e6 - (4.0 * b + 4.0 * r.pointwise_cmul_per_s)).abs() < 1.0);
        assert!((r.real_add_mops * 1e6 - (6.0 * b + 2.0 * r.pointwise_cmul_per_s)).abs() < 1.0);
    }
}
