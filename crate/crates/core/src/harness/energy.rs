//! Energy per timing acquisition: the ML detector burns more power than the
//! auto-correlation baseline but lets the RF front end switch off sooner.

use std::io::Write;

use crate::error::{Error, Result};

/// Estimated detector power for the 130 nm implementation.
pub const P_ML_130NM_W: f64 = 38e-3;
/// Estimated detector power for the 28 nm implementation.
pub const P_ML_28NM_W: f64 = 2.5e-3;
pub const T_ML_S: f64 = 0.400;
pub const T_AC_S: f64 = 0.620;
/// RF power far beyond any real front end; stands in for the limit.
pub const ASYMPTOTE_P_RF_W: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub p_rf_w: f64,
    pub p_ml_w: f64,
    pub p_ac_w: f64,
    pub t_ml_s: f64,
    pub t_ac_s: f64,
}

impl EnergyParams {
    /// Defaults: `p_ac = p_ml / 10` and the 400 / 620 ms acquisition times.
    pub fn new(p_rf_w: f64, p_ml_w: f64) -> Self {
        Self {
            p_rf_w,
            p_ml_w,
            p_ac_w: p_ml_w / 10.0,
            t_ml_s: T_ML_S,
            t_ac_s: T_AC_S,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_rf_w", self.p_rf_w),
            ("p_ml_w", self.p_ml_w),
            ("p_ac_w", self.p_ac_w),
            ("t_ml_s", self.t_ml_s),
            ("t_ac_s", self.t_ac_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("{v} must be positive and finite")));
            }
        }
        Ok(())
    }
}

/// `100 [1 - (P_RF + P_ML) t_ML / ((P_RF + P_AC) t_AC)]`, in percent.
pub fn energy_savings(p: &EnergyParams) -> Result<f64> {
    p.validate()?;
    let e_ml = (p.p_rf_w + p.p_ml_w) * p.t_ml_s;
    let e_ac = (p.p_rf_w + p.p_ac_w) * p.t_ac_s;
    Ok(100.0 * (1.0 - e_ml / e_ac))
}

/// Limit of the savings as the RF power dominates.
pub fn savings_asymptote(t_ml_s: f64, t_ac_s: f64) -> f64 {
    100.0 * (1.0 - t_ml_s / t_ac_s)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_sweep(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::param("sweep_points", "sweep is empty"));
    }
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::param("sweep range", format!("[{lo}, {hi}] must be positive and ordered")));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRow {
    pub node: String,
    pub p_ml_w: f64,
    pub p_rf_w: f64,
    pub delta_e_percent: f64,
}

/// One curve per named detector power; each curve ends with the asymptote row
/// at [`ASYMPTOTE_P_RF_W`].
pub fn energy_sweep(
    p_rf_w: &[f64],
    nodes: &[(String, f64)],
    ac_ratio: f64,
    t_ml_s: f64,
    t_ac_s: f64,
) -> Result<Vec<EnergyRow>> {
    if p_rf_w.is_empty() || nodes.is_empty() {
        return Err(Error::param("sweep", "needs at least one RF power and one detector power"));
    }
    let mut rows = Vec::new();
    for (node, p_ml) in nodes {
        for &p_rf in p_rf_w.iter().chain([&ASYMPTOTE_P_RF_W]) {
            let p = EnergyParams {
                p_rf_w: p_rf,
                p_ml_w: *p_ml,
                p_ac_w: p_ml * ac_ratio,
                t_ml_s,
                t_ac_s,
            };
            rows.push(EnergyRow {
                node: node.clone(),
                p_ml_w: *p_ml,
                p_rf_w: p_rf,
                delta_e_percent: energy_savings(&p)?,
            });
        }
    }
    Ok(rows)
}

/// RF power at which the savings reach `target_percent`, solving the formula
/// for `P_RF`. `None` when the target is at or above the asymptote.
pub fn p_rf_for_savings(target_percent: f64, p_ml_w: f64, p_ac_w: f64, t_ml_s: f64, t_ac_s: f64) -> Option<f64> {
    // (P + a) t_ml = k (P + b) t_ac with k = 1 - target/100
    let k = 1.0 - target_percent / 100.0;
    let denom = t_ml_s - k * t_ac_s;
    if denom >= 0.0 {
        return None;
    }
    let p = (k * p_ac_w * t_ac_s - p_ml_w * t_ml_s) / denom;
    (p > 0.0).then_some(p)
}

pub fn write_energy_csv(mut w: impl Write, rows: &[EnergyRow]) -> std::io::Result<()> {
    writeln!(w, "node,p_ml_w,p_rf_w,delta_e_percent")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.node, r.p_ml_w, r.p_rf_w, r.delta_e_percent)?;
    }
    Ok(())
}
