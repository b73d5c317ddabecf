//! Detection-latency Monte Carlo: independent trials with a random timing
//! offset and in-grid CFO, streamed until detection or the subframe cap.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::{ChannelConfig, ChannelKind, DownlinkSimulator, FillerPolicy, FrameLayout};
use crate::detector::{timing_error_cells, truth_cell, AcDetector, Detection, MlDetector, ThresholdTable};
use crate::error::{Error, Result};
use crate::npss::FrequencyGrid;
use crate::olscorr::CorrelatorSetup;
use crate::rng::{derive_seed, rng_for, streams};

pub const SUBFRAME_MS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorKind {
    Ml,
    Ac,
}

impl std::str::FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ml" => Ok(Self::Ml),
            "ac" => Ok(Self::Ac),
            other => Err(format!("unknown detector `{other}` (expected ml or ac)")),
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ml => "ml",
            Self::Ac => "ac",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CfoSpec {
    Fixed(f64),
    /// Uniform over the hypothesis grid's coverage.
    UniformInGrid,
}

impl std::str::FromStr for CfoSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "uniform" => Ok(Self::UniformInGrid),
            v => v.parse().map(Self::Fixed).map_err(|e| format!("cfo_hz: {e}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub snr_db: f64,
    pub channel_kind: ChannelKind,
    pub doppler_hz: f64,
    pub cfo: CfoSpec,
    /// Random per trial when `None`.
    pub timing_offset_samples: Option<usize>,
    pub filler: FillerPolicy,
    pub max_subframes: usize,
    /// Largest timing error still counted as a correct detection.
    pub tolerance_cells: usize,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            snr_db: -12.6,
            channel_kind: ChannelKind::TuFading,
            doppler_hz: 2.0,
            cfo: CfoSpec::UniformInGrid,
            timing_offset_samples: None,
            filler: FillerPolicy::RandomQpskOfdm,
            max_subframes: crate::detector::DEFAULT_MAX_SUBFRAMES,
            tolerance_cells: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    /// Declared at the wrong timing; the run ends there.
    FalseLock,
    /// Nothing declared before the cap.
    Miss,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hit => "hit",
            Self::FalseLock => "false_lock",
            Self::Miss => "miss",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyRow {
    pub run_id: usize,
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub detected: bool,
    /// Subframes consumed times 10 ms; the cap for misses.
    pub latency_ms: usize,
    pub censored: bool,
    pub outcome: Outcome,
    pub theta_err_cells: Option<usize>,
    pub f_err_hz: Option<f64>,
    pub cfo_hz: f64,
    pub truth_cell: usize,
}

/// Trial parameters drawn from the run's own stream.
fn trial_channel(spec: &TrialSpec, seed: u64, run_id: usize, grid: &FrequencyGrid) -> ChannelConfig {
    let trial_seed = derive_seed(seed, streams::TRIAL, run_id as u64);
    let cfo_hz = match spec.cfo {
        CfoSpec::Fixed(f) => f,
        CfoSpec::UniformInGrid => {
            let c = grid.coverage_hz();
            rng_for(trial_seed, streams::TRIAL, 1).random_range(-c..=c)
        }
    };
    ChannelConfig {
        snr_db: spec.snr_db,
        cfo_hz,
        timing_offset_samples: spec.timing_offset_samples,
        channel_kind: spec.channel_kind,
        doppler_hz: spec.doppler_hz,
        seed: trial_seed,
    }
}

fn classify(
    run_id: usize,
    kind: DetectorKind,
    spec: &TrialSpec,
    cfg: &ChannelConfig,
    truth: usize,
    det: Option<Detection>,
) -> LatencyRow {
    let mut row = LatencyRow {
        run_id,
        detector: kind,
        snr_db: spec.snr_db,
        detected: false,
        latency_ms: spec.max_subframes * SUBFRAME_MS,
        censored: true,
        outcome: Outcome::Miss,
        theta_err_cells: None,
        f_err_hz: None,
        cfo_hz: cfg.cfo_hz,
        truth_cell: truth,
    };
    if let Some(d) = det {
        let err = timing_error_cells(d.theta_hat, truth);
        row.theta_err_cells = Some(err);
        row.f_err_hz = d.f_hat_hz.map(|f| (f - cfg.cfo_hz).abs());
        row.latency_ms = d.subframes_used * SUBFRAME_MS;
        if err <= spec.tolerance_cells {
            row.detected = true;
            row.censored = false;
            row.outcome = Outcome::Hit;
        } else {
            row.outcome = Outcome::FalseLock;
        }
    }
    row
}

/// One trial of the ML detector.
pub fn run_ml_trial(setup: &CorrelatorSetup, table: &ThresholdTable, spec: &TrialSpec, seed: u64, run_id: usize) -> Result<LatencyRow> {
    let cfg = trial_channel(spec, seed, run_id, &setup.grid);
    let layout = FrameLayout {
        filler: spec.filler,
        ..FrameLayout::default()
    };
    let mut sim = DownlinkSimulator::new(layout, &cfg)?;
    let truth = truth_cell(sim.npss_position_1920k());
    let mut det = MlDetector::new(setup, table.clone());
    let mut found = None;
    for _ in 0..spec.max_subframes {
        let x = sim.next_subframe_240k();
        if let Some(d) = det.step(&x)? {
            found = Some(d);
            break;
        }
    }
    Ok(classify(run_id, DetectorKind::Ml, spec, &cfg, truth, found))
}

/// One trial of the auto-correlation baseline on the same channel draw.
pub fn run_ac_trial(table: &ThresholdTable, spec: &TrialSpec, seed: u64, run_id: usize) -> Result<LatencyRow> {
    let cfg = trial_channel(spec, seed, run_id, &FrequencyGrid::default());
    let layout = FrameLayout {
        filler: spec.filler,
        ..FrameLayout::default()
    };
    let mut sim = DownlinkSimulator::new(layout, &cfg)?;
    let truth = truth_cell(sim.npss_position_1920k());
    let mut det = AcDetector::new(table.clone());
    let mut found = None;
    for _ in 0..spec.max_subframes {
        let x = sim.next_frame_1920k();
        if let Some(d) = det.step(&x)? {
            found = Some(d);
            break;
        }
    }
    Ok(classify(run_id, DetectorKind::Ac, spec, &cfg, truth, found))
}

/// `runs` trials in parallel, returned sorted by run id.
pub fn run_latency(kind: DetectorKind, table: &ThresholdTable, spec: &TrialSpec, runs: usize, seed: u64) -> Result<Vec<LatencyRow>> {
    if spec.max_subframes == 0 {
        return Err(Error::param("max_subframes", "must be at least 1"));
    }
    let setup = CorrelatorSetup::standard();
    let mut rows = (0..runs)
        .into_par_iter()
        .map(|i| match kind {
            DetectorKind::Ml => run_ml_trial(&setup, table, spec, seed, i),
            DetectorKind::Ac => run_ac_trial(table, spec, seed, i),
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.run_id);
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySummary {
    pub detector: DetectorKind,
    pub snr_db: f64,
    pub runs: usize,
    pub hits: usize,
    pub false_locks: usize,
    pub misses: usize,
    pub hit_rate: f64,
    /// Over hits only; `None` without any.
    pub mean_ms: Option<f64>,
    /// Percentiles over all runs, failures ranked last; `None` when the rank
    /// lands on a failed run.
    pub p50_ms: Option<usize>,
    pub p90_ms: Option<usize>,
}

/// Nearest-rank percentile of hit latencies among `runs` trials.
pub fn latency_percentile(hits_sorted: &[usize], runs: usize, p: f64) -> Option<usize> {
    if runs == 0 {
        return None;
    }
    let rank = ((p * runs as f64).ceil() as usize).max(1);
    hits_sorted.get(rank - 1).copied()
}

pub fn summarize(rows: &[LatencyRow]) -> Option<LatencySummary> {
    let first = rows.first()?;
    let mut hits: Vec<usize> = rows.iter().filter(|r| r.detected).map(|r| r.latency_ms).collect();
    hits.sort_unstable();
    let runs = rows.len();
    let false_locks = rows.iter().filter(|r| r.outcome == Outcome::FalseLock).count();
    Some(LatencySummary {
        detector: first.detector,
        snr_db: first.snr_db,
        runs,
        hits: hits.len(),
        false_locks,
        misses: runs - hits.len() - false_locks,
        hit_rate: hits.len() as f64 / runs as f64,
        mean_ms: (!hits.is_empty()).then(|| hits.iter().sum::<usize>() as f64 / hits.len() as f64),
        p50_ms: latency_percentile(&hits, runs, 0.5),
        p90_ms: latency_percentile(&hits, runs, 0.9),
    })
}

/// `(latency_ms, fraction_detected)` at every subframe boundary up to the cap.
pub fn latency_cdf(rows: &[LatencyRow], max_subframes: usize) -> Vec<(usize, f64)> {
    let mut counts = vec![0usize; max_subframes + 1];
    for r in rows.iter().filter(|r| r.detected) {
        counts[(r.latency_ms / SUBFRAME_MS).min(max_subframes)] += 1;
    }
    let n = rows.len().max(1) as f64;
    let mut cum = 0;
    (1..=max_subframes)
        .map(|k| {
            cum += counts[k];
            (k * SUBFRAME_MS, cum as f64 / n)
        })
        .collect()
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

pub fn write_rows_csv(mut w: impl Write, rows: &[LatencyRow]) -> std::io::Result<()> {
    writeln!(
        w,
        "run_id,detector,snr_db,detected,latency_ms,censored,outcome,theta_err_cells,f_err_hz,cfo_hz,truth_cell"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.run_id,
            r.detector,
            r.snr_db,
            r.detected,
            r.latency_ms,
            r.censored,
            r.outcome,
            opt(r.theta_err_cells),
            opt(r.f_err_hz),
            r.cfo_hz,
            r.truth_cell
        )?;
    }
    Ok(())
}

pub fn write_cdf_csv(mut w: impl Write, detector: DetectorKind, cdf: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(w, "detector,latency_ms,fraction_detected")?;
    for (t, f) in cdf {
        writeln!(w, "{detector},{t},{f}")?;
    }
    Ok(())
}

pub fn write_summary_csv(mut w: impl Write, summaries: &[LatencySummary]) -> std::io::Result<()> {
    writeln!(w, "detector,snr_db,runs,hits,false_locks,misses,hit_rate,mean_ms,p50_ms,p90_ms")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            s.detector,
            s.snr_db,
            s.runs,
            s.hits,
            s.false_locks,
            s.misses,
            s.hit_rate,
            opt(s.mean_ms),
            opt(s.p50_ms),
            opt(s.p90_ms)
        )?;
    }
    Ok(())
}
