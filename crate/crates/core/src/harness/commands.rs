//! The CLI subcommands. Each reads a [`Config`], writes CSV (and I/Q) files
//! into the output directory and returns the paths it wrote.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::complexity::complexity;
use super::config::{parse_snr_db, Config};
use super::energy::{energy_sweep, log_sweep, write_energy_csv, P_ML_130NM_W, P_ML_28NM_W, T_AC_S, T_ML_S};
use super::latency::{
    latency_cdf, run_latency, summarize, write_cdf_csv, write_rows_csv, write_summary_csv, CfoSpec, DetectorKind,
    TrialSpec,
};
use crate::channel::{ChannelConfig, ChannelKind, DownlinkSimulator, FillerPolicy, FrameLayout, FRAME_LEN};
use crate::detector::{
    calibrate_ac, calibrate_ml, truth_cell, AcDetector, Detection, MlDetector, NullInput, ThresholdTable,
    DEFAULT_FA_TARGET, DEFAULT_MAX_SUBFRAMES,
};
use crate::error::{Error, Result};
use crate::fir::{decimate_to_240k, DECIMATION, HIGH_RATE_HZ, LOW_RATE_HZ};
use crate::io::{read_iq, write_iq, write_iq_csv};
use crate::npss::{frequency_grid, NpssReference, DEFAULT_BIN_STEP, DEFAULT_CANDIDATES};
use crate::olscorr::{CorrelatorSetup, OlsConfig};

pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_CALIBRATION_RUNS: usize = 2_000;
pub const ML_TABLE_FILE: &str = "thresholds_ml.csv";
pub const AC_TABLE_FILE: &str = "thresholds_ac.csv";

fn create(out: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    let f = BufWriter::new(File::create(&path)?);
    Ok((path, f))
}

fn finish_file(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

fn seed_from(cfg: &mut Config, seed: Option<u64>) -> Result<u64> {
    let from_file = cfg.take_or("seed", DEFAULT_SEED)?;
    Ok(seed.unwrap_or(from_file))
}

fn take_snr(cfg: &mut Config, key: &str, default: f64) -> Result<f64> {
    match cfg.take::<String>(key)? {
        None => Ok(default),
        Some(s) => parse_snr_db(&s).map_err(|reason| Error::Config {
            path: cfg.path().to_string(),
            line: 0,
            reason: format!("`{key}`: {reason}"),
        }),
    }
}

/// `timing_offset = random` or a sample count below one frame.
fn take_timing_offset(cfg: &mut Config) -> Result<Option<usize>> {
    match cfg.take::<String>("timing_offset")? {
        None => Ok(None),
        Some(s) if s == "random" => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|e| Error::Config {
            path: cfg.path().to_string(),
            line: 0,
            reason: format!("`timing_offset`: {e}"),
        }),
    }
}

/// Exports the NPSS waveform, the 240 kHz reference and a simulated received
/// stream with its ground truth.
pub fn cmd_gen(mut cfg: Config, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let seed = seed_from(&mut cfg, seed)?;
    let frames: usize = cfg.take_or("frames", 4)?;
    let channel = ChannelConfig {
        snr_db: take_snr(&mut cfg, "snr_db", f64::INFINITY)?,
        cfo_hz: cfg.take_or("cfo_hz", 0.0)?,
        timing_offset_samples: take_timing_offset(&mut cfg)?,
        channel_kind: cfg.take_or("channel", ChannelKind::AwgnOnly)?,
        doppler_hz: cfg.take_or("doppler_hz", 2.0)?,
        seed,
    };
    let layout = FrameLayout {
        filler: cfg.take_or("filler", FillerPolicy::RandomQpskOfdm)?,
        ..FrameLayout::default()
    };
    cfg.finish()?;

    let mut written = Vec::new();
    let reference = NpssReference::standard();
    for (stem, samples) in [("npss_1920k", &reference.wave_1920k), ("reference_240k", &reference.ref_240k)] {
        let iq = out.join(format!("{stem}.iq"));
        std::fs::create_dir_all(out)?;
        write_iq(&iq, samples)?;
        let (csv, mut w) = create(out, &format!("{stem}.csv"))?;
        write_iq_csv(&mut w, samples)?;
        finish_file(w)?;
        written.extend([iq, csv]);
    }

    if frames > 0 {
        let mut sim = DownlinkSimulator::new(layout.clone(), &channel)?;
        let mut high = Vec::with_capacity(frames * FRAME_LEN);
        for _ in 0..frames {
            high.extend(sim.next_frame_1920k());
        }
        let low = decimate_to_240k(&high);
        let hi_path = out.join("stream_1920k.iq");
        let lo_path = out.join("stream_240k.iq");
        write_iq(&hi_path, &high)?;
        write_iq(&lo_path, &low)?;
        let (truth, mut w) = create(out, "stream_truth.csv")?;
        writeln!(w, "frames,snr_db,cfo_hz,channel,filler,timing_offset_samples,npss_start_1920k,npss_lag_240k,truth_cell")?;
        writeln!(
            w,
            "{frames},{},{},{},{},{},{},{},{}",
            channel.snr_db,
            channel.cfo_hz,
            channel.channel_kind,
            layout.filler,
            sim.timing_offset(),
            sim.npss_position_1920k(),
            sim.npss_lag_240k(),
            truth_cell(sim.npss_position_1920k())
        )?;
        finish_file(w)?;
        written.extend([hi_path, lo_path, truth]);
    }
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    Ml,
    Ac,
    Both,
}

impl std::str::FromStr for Which {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "ml" => Ok(Self::Ml),
            "ac" => Ok(Self::Ac),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown detector `{other}` (expected ml, ac or both)")),
        }
    }
}

/// Per-depth threshold tables from signal-free runs.
pub fn cmd_calibrate(mut cfg: Config, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let seed = seed_from(&mut cfg, seed)?;
    let which: Which = cfg.take_or("detector", Which::Ml)?;
    let runs = cfg.take_or("runs", DEFAULT_CALIBRATION_RUNS)?;
    let max_subframes = cfg.take_or("max_subframes", DEFAULT_MAX_SUBFRAMES)?;
    let fa_target = cfg.take_or("fa_target", DEFAULT_FA_TARGET)?;
    let input = NullInput {
        filler: cfg.take_or("filler", FillerPolicy::Silence)?,
        snr_db: take_snr(&mut cfg, "snr_db", f64::INFINITY)?,
    };
    cfg.finish()?;

    let mut written = Vec::new();
    if matches!(which, Which::Ml | Which::Both) {
        let table = calibrate_ml(runs, max_subframes, fa_target, seed, input)?;
        std::fs::create_dir_all(out)?;
        let path = out.join(ML_TABLE_FILE);
        table.save(&path)?;
        written.push(path);
    }
    if matches!(which, Which::Ac | Which::Both) {
        let table = calibrate_ac(runs, max_subframes, fa_target, seed, input)?;
        std::fs::create_dir_all(out)?;
        let path = out.join(AC_TABLE_FILE);
        table.save(&path)?;
        written.push(path);
    }
    Ok(written)
}

fn require_table(cfg: &mut Config, key: &str) -> Result<ThresholdTable> {
    match cfg.take::<PathBuf>(key)? {
        Some(p) => ThresholdTable::load(&p),
        None => Err(Error::param("threshold table", format!("config key `{key}` is required"))),
    }
}

/// Latency Monte Carlo for each configured detector.
pub fn cmd_latency(mut cfg: Config, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let seed = seed_from(&mut cfg, seed)?;
    let runs: usize = cfg.take_or("runs", 200)?;
    let detectors = cfg.take_list::<DetectorKind>("detectors")?.unwrap_or(vec![DetectorKind::Ml]);
    let base = TrialSpec {
        snr_db: take_snr(&mut cfg, "snr_db", -12.6)?,
        channel_kind: cfg.take_or("channel", ChannelKind::TuFading)?,
        doppler_hz: cfg.take_or("doppler_hz", 2.0)?,
        cfo: cfg.take_or("cfo_hz", CfoSpec::UniformInGrid)?,
        timing_offset_samples: take_timing_offset(&mut cfg)?,
        filler: cfg.take_or("filler", FillerPolicy::RandomQpskOfdm)?,
        max_subframes: cfg.take_or("max_subframes", DEFAULT_MAX_SUBFRAMES)?,
        tolerance_cells: cfg.take_or("tolerance_cells", 1)?,
    };
    let ac_tolerance: usize = cfg.take_or("ac_tolerance_cells", 4)?;
    let mut jobs = Vec::new();
    for &kind in &detectors {
        let (key, tol) = match kind {
            DetectorKind::Ml => ("threshold_ml", base.tolerance_cells),
            DetectorKind::Ac => ("threshold_ac", ac_tolerance),
        };
        let table = require_table(&mut cfg, key)?;
        jobs.push((kind, table, TrialSpec { tolerance_cells: tol, ..base.clone() }));
    }
    // keys for detectors not run are still accepted
    cfg.take::<String>("threshold_ml")?;
    cfg.take::<String>("threshold_ac")?;
    cfg.finish()?;

    let (runs_path, mut runs_w) = create(out, "latency_runs.csv")?;
    let (cdf_path, mut cdf_w) = create(out, "latency_cdf.csv")?;
    let (sum_path, mut sum_w) = create(out, "latency_summary.csv")?;
    let mut all_rows = Vec::new();
    let mut cdf_rows = Vec::new();
    let mut summaries = Vec::new();
    for (kind, table, spec) in jobs {
        let rows = run_latency(kind, &table, &spec, runs, seed)?;
        cdf_rows.push((kind, latency_cdf(&rows, spec.max_subframes)));
        summaries.extend(summarize(&rows));
        all_rows.extend(rows);
    }
    write_rows_csv(&mut runs_w, &all_rows)?;
    writeln!(cdf_w, "detector,latency_ms,fraction_detected")?;
    for (kind, cdf) in &cdf_rows {
        let mut buf = Vec::new();
        write_cdf_csv(&mut buf, *kind, cdf)?;
        // drop the per-detector header
        let text = String::from_utf8(buf).expect("csv is ascii");
        cdf_w.write_all(text.split_once('\n').map_or("", |s| s.1).as_bytes())?;
    }
    write_summary_csv(&mut sum_w, &summaries)?;
    for w in [runs_w, cdf_w, sum_w] {
        finish_file(w)?;
    }
    Ok(vec![runs_path, cdf_path, sum_path])
}

/// Energy savings against RF power for each detector power.
pub fn cmd_energy(mut cfg: Config, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    // the model is deterministic; the key is accepted for uniformity
    let _ = seed_from(&mut cfg, seed)?;
    let p_rf = match cfg.take_list::<f64>("p_rf_w")? {
        Some(list) => list,
        None => log_sweep(
            cfg.take_or("p_rf_min_w", 1e-3)?,
            cfg.take_or("p_rf_max_w", 1.0)?,
            cfg.take_or("sweep_points", 61)?,
        )?,
    };
    let (p_ml, default_names) = match cfg.take_list::<f64>("p_ml_w")? {
        Some(p) => {
            let names = p.iter().map(|v| format!("p_ml_{v}")).collect();
            (p, names)
        }
        None => (vec![P_ML_130NM_W, P_ML_28NM_W], vec!["130nm".to_string(), "28nm".to_string()]),
    };
    let names = cfg.take_list::<String>("node_names")?.unwrap_or(default_names);
    if names.len() != p_ml.len() {
        return Err(Error::param("node_names", "needs one name per p_ml_w entry"));
    }
    let ac_ratio = cfg.take_or("p_ac_ratio", 0.1)?;
    let t_ml = cfg.take_or("t_ml_s", T_ML_S)?;
    let t_ac = cfg.take_or("t_ac_s", T_AC_S)?;
    cfg.finish()?;
    if p_rf.is_empty() {
        return Err(Error::param("p_rf_w", "sweep is empty"));
    }
    let nodes: Vec<(String, f64)> = names.into_iter().zip(p_ml).collect();
    let rows = energy_sweep(&p_rf, &nodes, ac_ratio, t_ml, t_ac)?;
    let (path, mut w) = create(out, "energy.csv")?;
    write_energy_csv(&mut w, &rows)?;
    finish_file(w)?;
    Ok(vec![path])
}

/// Operation counts for the configured correlator.
pub fn cmd_complexity(mut cfg: Config, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let _ = seed_from(&mut cfg, seed)?;
    let d = OlsConfig::default();
    let ols = OlsConfig {
        fft_size: cfg.take_or("fft_size", d.fft_size)?,
        overlap: cfg.take_or("overlap", d.overlap)?,
        ..d
    };
    let n_candidates = cfg.take_or("n_candidates", DEFAULT_CANDIDATES)?;
    let bin_step = cfg.take_or("bin_step", DEFAULT_BIN_STEP)?;
    cfg.finish()?;
    ols.validate()?;
    let grid = frequency_grid(n_candidates, bin_step, ols.fft_size, LOW_RATE_HZ)?;
    let report = complexity(&ols, &grid);
    let (path, mut w) = create(out, "complexity.csv")?;
    report.write_csv(&mut w)?;
    finish_file(w)?;
    Ok(vec![path])
}

/// Runs one detector over an I/Q file until it fires or the samples run out.
pub fn detect_samples(kind: DetectorKind, samples: &[num_complex::Complex<f64>], sample_rate_hz: f64, table: ThresholdTable) -> Result<(Option<Detection>, usize)> {
    let is_high = (sample_rate_hz - HIGH_RATE_HZ).abs() < 1e-6;
    let is_low = (sample_rate_hz - LOW_RATE_HZ).abs() < 1e-6;
    if !is_high && !is_low {
        return Err(Error::param("sample_rate_hz", "must be 1920000 or 240000"));
    }
    match kind {
        DetectorKind::Ml => {
            let low = if is_high { decimate_to_240k(samples) } else { samples.to_vec() };
            let mut det = MlDetector::new(&CorrelatorSetup::standard(), table);
            let per = FRAME_LEN / DECIMATION;
            let mut used = 0;
            for chunk in low.chunks_exact(per) {
                used += 1;
                if let Some(d) = det.step(chunk)? {
                    return Ok((Some(d), used));
                }
            }
            Ok((None, used))
        }
        DetectorKind::Ac => {
            if !is_high {
                return Err(Error::param("sample_rate_hz", "the auto-correlation detector needs 1.92 MHz input"));
            }
            let mut det = AcDetector::new(table);
            let mut used = 0;
            for chunk in samples.chunks_exact(FRAME_LEN) {
                used += 1;
                if let Some(d) = det.step(chunk)? {
                    return Ok((Some(d), used));
                }
            }
            Ok((None, used))
        }
    }
}

pub fn cmd_detect(mut cfg: Config, seed: Option<u64>, out: &Path) -> Result<Vec<PathBuf>> {
    let _ = seed_from(&mut cfg, seed)?;
    let input: PathBuf = cfg
        .take("input")?
        .ok_or_else(|| Error::param("input", "config key `input` is required"))?;
    let rate: f64 = cfg.take_or("sample_rate_hz", LOW_RATE_HZ)?;
    let kind: DetectorKind = cfg.take_or("detector", DetectorKind::Ml)?;
    let table = require_table(&mut cfg, "threshold")?;
    cfg.finish()?;
    let samples = read_iq(&input)?;
    let (det, used) = detect_samples(kind, &samples, rate, table)?;
    let (path, mut w) = create(out, "detections.csv")?;
    writeln!(w, "run_id,detector,detected,subframes_used,theta_hat,candidate,f_hat_hz,metric")?;
    match det {
        Some(d) => writeln!(
            w,
            "0,{kind},true,{},{},{},{},{}",
            d.subframes_used,
            d.theta_hat,
            d.candidate.map_or_else(String::new, |c| c.to_string()),
            d.f_hat_hz.map_or_else(String::new, |f| f.to_string()),
            d.metric
        )?,
        None => writeln!(w, "0,{kind},false,{used},,,,")?,
    }
    finish_file(w)?;
    Ok(vec![path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conf(text: &str) -> Config {
        Config::parse(text, "test.conf").unwrap()
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        let dir = tempfile::tempdir().unwrap();
        let cmds: [fn(Config, Option<u64>, &Path) -> Result<Vec<PathBuf>>; 4] =
            [cmd_gen, cmd_calibrate, cmd_energy, cmd_complexity];
        for cmd in cmds {
            match cmd(conf("bogus_key = 1\n"), None, dir.path()) {
                Err(Error::UnknownConfigKey { key, .. }) => assert_eq!(key, "bogus_key"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn latency_without_table_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(cmd_latency(conf("runs = 1\n"), None, dir.path()).is_err());
    }

    #[test]
    fn degenerate_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let files = cmd_calibrate(conf("fa_target = 1.0\nruns = 1\nmax_subframes = 3\n"), None, dir.path()).unwrap();
        let t = ThresholdTable::load(&files[0]).unwrap();
        assert_eq!(t.thresholds(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gen_then_detect() {
        let dir = tempfile::tempdir().unwrap();
        cmd_gen(conf("frames = 3\ntiming_offset = 4000\ncfo_hz = 2000\n"), Some(5), dir.path()).unwrap();
        let table = ThresholdTable::new(vec![20.0], 0.01, 1.2).unwrap();
        table.save(&dir.path().join("t.csv")).unwrap();
        let truth = std::fs::read_to_string(dir.path().join("stream_truth.csv")).unwrap();
        let cell: usize = truth.lines().nth(1).unwrap().rsplit(',').next().unwrap().parse().unwrap();
        let text = format!(
            "input = {}\nthreshold = {}\n",
            dir.path().join("stream_240k.iq").display(),
            dir.path().join("t.csv").display()
        );
        let files = cmd_detect(conf(&text), None, dir.path()).unwrap();
        let out = std::fs::read_to_string(&files[0]).unwrap();
        let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[2], "true");
        let theta: usize = row[4].parse().unwrap();
        assert!(crate::detector::timing_error_cells(theta, cell) <= 1);
        let f: f64 = row[6].parse().unwrap();
        assert!((f - 2000.0).abs() <= 468.75);
    }
}
