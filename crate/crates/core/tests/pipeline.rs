use std::path::{Path, PathBuf};
use std::process::Command;

use npss_core::channel::{ChannelConfig, ChannelKind, DownlinkSimulator, FrameLayout};
use npss_core::detector::{truth_cell, timing_error_cells, AcDetector, Detection, MlDetector, ThresholdTable};
use npss_core::harness::{cmd_calibrate, cmd_complexity, cmd_detect, cmd_energy, cmd_gen, cmd_latency, Config};
use npss_core::C64;

fn sim(snr_db: f64, seed: u64) -> DownlinkSimulator {
    let cfg = ChannelConfig {
        snr_db,
        cfo_hz: 3_100.0,
        timing_offset_samples: Some(9_001),
        channel_kind: ChannelKind::AwgnOnly,
        doppler_hz: 2.0,
        seed,
    };
    DownlinkSimulator::new(FrameLayout::default(), &cfg).unwrap()
}

fn scaled(x: &[C64], c: f64) -> Vec<C64> {
    x.iter().map(|v| v * c).collect()
}

fn same_decision(a: &Option<Detection>, b: &Option<Detection>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(a), Some(b)) => {
            a.theta_hat == b.theta_hat
                && a.candidate == b.candidate
                && a.subframes_used == b.subframes_used
                && (a.metric - b.metric).abs() <= 1e-9 * a.metric
        }
        _ => false,
    }
}

#[test]
fn ml_decisions_are_scale_invariant() {
    let table = ThresholdTable::new(vec![14.0, 10.0, 8.0, 6.5, 5.5, 5.0], 0.01, 1.2).unwrap();
    let mut s = sim(-9.0, 21);
    let frames: Vec<Vec<C64>> = (0..6).map(|_| s.next_subframe_240k()).collect();
    let mut reference = MlDetector::standard(table.clone());
    let mut cells = Vec::new();
    let base: Vec<Option<Detection>> = frames
        .iter()
        .map(|x| {
            let d = reference.step(x).unwrap();
            cells.push(reference.last_report().unwrap().peaks.map(|p| (p.cell, p.candidate)));
            d
        })
        .collect();
    assert!(base.iter().any(Option::is_some), "pick an SNR where something is decided");
    for c in [1e-4, 3.7, 1e3] {
        let mut det = MlDetector::standard(table.clone());
        for ((x, want), peaks) in frames.iter().zip(&base).zip(&cells) {
            let got = det.step(&scaled(x, c)).unwrap();
            assert!(same_decision(&got, want), "scale {c}: {got:?} vs {want:?}");
            assert_eq!(det.last_report().unwrap().peaks.map(|p| (p.cell, p.candidate)), *peaks);
        }
    }
}

#[test]
fn ac_decisions_are_scale_invariant() {
    let table = ThresholdTable::new(vec![30.0, 12.0, 8.0, 6.0], 0.01, 1.0).unwrap();
    let mut s = sim(-3.0, 22);
    let frames: Vec<Vec<C64>> = (0..4).map(|_| s.next_frame_1920k()).collect();
    let mut reference = AcDetector::new(table.clone());
    let base: Vec<Option<Detection>> = frames.iter().map(|x| reference.step(x).unwrap()).collect();
    for c in [1e-3, 42.0] {
        let mut det = AcDetector::new(table.clone());
        for (x, want) in frames.iter().zip(&base) {
            let got = det.step(&scaled(x, c)).unwrap();
            assert!(same_decision(&got, want), "scale {c}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn ac_detector_locks_on_clean_signal() {
    let table = ThresholdTable::new(vec![20.0], 0.01, 1.0).unwrap();
    let mut s = sim(20.0, 23);
    let truth = truth_cell(s.npss_position_1920k());
    let mut det = AcDetector::new(table);
    let mut hit = None;
    for _ in 0..4 {
        if let Some(d) = det.step(&s.next_frame_1920k()).unwrap() {
            hit = Some(d);
            break;
        }
    }
    let d = hit.expect("clean AC detection");
    assert!(timing_error_cells(d.theta_hat, truth) <= 4, "{} vs {truth}", d.theta_hat);
}

fn conf(text: &str) -> Config {
    Config::parse(text, "test.conf").unwrap()
}

fn read_all(files: &[PathBuf]) -> Vec<(String, Vec<u8>)> {
    files
        .iter()
        .map(|f| (f.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(f).unwrap()))
        .collect()
}

type Cmd = fn(Config, Option<u64>, &Path) -> npss_core::Result<Vec<PathBuf>>;

fn twice(cmd: Cmd, text: &str, seed: Option<u64>) -> Vec<(String, Vec<u8>)> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let fa = read_all(&cmd(conf(text), seed, a.path()).unwrap());
    let fb = read_all(&cmd(conf(text), seed, b.path()).unwrap());
    assert_eq!(fa, fb, "outputs differ between identical runs");
    fa
}

#[test]
fn commands_are_deterministic() {
    twice(cmd_gen, "frames = 2\nsnr_db = 0\ncfo_hz = 1200\nchannel = tu_fading\n", Some(9));
    twice(cmd_energy, "", None);
    twice(cmd_complexity, "", None);
    let cal = twice(
        cmd_calibrate,
        "detector = both\nruns = 100\nmax_subframes = 3\nfa_target = 0.1\nfiller = qpsk\nsnr_db = -12.6\n",
        Some(4),
    );
    assert_eq!(cal.len(), 2);

    // different seeds give different tables
    let other = tempfile::tempdir().unwrap();
    let o = read_all(
        &cmd_calibrate(conf("runs = 100\nmax_subframes = 3\nfa_target = 0.1\n"), Some(5), other.path()).unwrap(),
    );
    let same_seed = tempfile::tempdir().unwrap();
    let s = read_all(
        &cmd_calibrate(conf("runs = 100\nmax_subframes = 3\nfa_target = 0.1\n"), Some(4), same_seed.path()).unwrap(),
    );
    assert_ne!(o[0].1, s[0].1);

    let dir = tempfile::tempdir().unwrap();
    let ml = dir.path().join("ml.csv");
    let ac = dir.path().join("ac.csv");
    std::fs::write(&ml, &cal[0].1).unwrap();
    std::fs::write(&ac, &cal[1].1).unwrap();
    let lat = format!(
        "runs = 4\nmax_subframes = 6\ndetectors = ml, ac\nsnr_db = 0\nchannel = awgn_only\nthreshold_ml = {}\nthreshold_ac = {}\n",
        ml.display(),
        ac.display()
    );
    let out = twice(cmd_latency, &lat, Some(8));
    let runs = String::from_utf8(out[0].1.clone()).unwrap();
    assert_eq!(runs.lines().count(), 1 + 8);

    let gen_dir = tempfile::tempdir().unwrap();
    cmd_gen(conf("frames = 3\n"), Some(2), gen_dir.path()).unwrap();
    let det = format!(
        "input = {}\nsample_rate_hz = 1920000\nthreshold = {}\n",
        gen_dir.path().join("stream_1920k.iq").display(),
        ml.display()
    );
    twice(cmd_detect, &det, None);
}

#[test]
fn latency_cdf_ends_at_hit_rate() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    ThresholdTable::new(vec![15.0, 10.0, 8.0, 7.0], 0.01, 1.2).unwrap().save(&table).unwrap();
    let text = format!(
        "runs = 6\nmax_subframes = 4\nsnr_db = -10\nchannel = tu_fading\nthreshold_ml = {}\n",
        table.display()
    );
    let files = cmd_latency(conf(&text), Some(3), dir.path()).unwrap();
    let cdf = std::fs::read_to_string(&files[1]).unwrap();
    let fracs: Vec<f64> = cdf.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(fracs.len(), 4);
    assert!(fracs.windows(2).all(|w| w[1] >= w[0]));
    let summary = std::fs::read_to_string(&files[2]).unwrap();
    let hit_rate: f64 = summary.lines().nth(1).unwrap().split(',').nth(6).unwrap().parse().unwrap();
    assert_eq!(*fracs.last().unwrap(), hit_rate);
    let rows = std::fs::read_to_string(&files[0]).unwrap();
    for line in rows.lines().skip(1) {
        let latency: usize = line.split(',').nth(4).unwrap().parse().unwrap();
        assert_eq!(latency % 10, 0);
    }
}

#[test]
fn binary_runs_and_rejects_unknown_keys() {
    let exe = env!("CARGO_BIN_EXE_npss");
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let st = Command::new(exe)
            .args(["complexity", "--seed", "3", "--out"])
            .arg(out)
            .status()
            .unwrap();
        assert!(st.success());
        std::fs::read(out.join("complexity.csv")).unwrap()
    };
    assert_eq!(run(&dir.path().join("a")), run(&dir.path().join("b")));

    let bad = dir.path().join("bad.conf");
    std::fs::write(&bad, "runs = 5\nrunz = 6\n").unwrap();
    let out = Command::new(exe)
        .args(["calibrate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("runz"));
}
