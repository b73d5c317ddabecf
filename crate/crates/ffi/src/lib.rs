//! C ABI over `npss-core`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! `*_new` function and released by the matching `*_free`. Functions return an
//! [`NpssStatus`]; results come back through out-pointers. Complex samples are
//! interleaved `double` pairs (re, im). Panics never unwind into C: they are
//! caught and reported as `NPSS_STATUS_PANIC`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use npss_core::channel::{ChannelConfig, ChannelKind, DownlinkSimulator, FillerPolicy, FrameLayout, FRAME_LEN};
use npss_core::detector::{
    calibrate_threshold, truth_cell, AcDetector, Detection, MlDetector, ThresholdTable,
};
use npss_core::fir::DECIMATION;
use npss_core::harness::energy::{energy_savings, EnergyParams};
use npss_core::{Error, C64};

/// Samples per 10 ms at 240 kHz.
pub const NPSS_SUBFRAME_LEN: usize = 2_400;
/// Samples per 10 ms at 1.92 MHz.
pub const NPSS_FRAME_LEN: usize = 19_200;

const _: () = assert!(NPSS_FRAME_LEN == FRAME_LEN && NPSS_SUBFRAME_LEN * DECIMATION == FRAME_LEN);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Io = 4,
    Format = 5,
    Statistics = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssChannelKind {
    AwgnOnly = 0,
    TuFading = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NpssFiller {
    RandomQpskOfdm = 0,
    Silence = 1,
}

/// Result of one detector step. `detected` is 0 or 1; the remaining fields
/// are meaningful only when it is 1. `candidate` is -1 and `f_hat_hz` NaN for
/// the auto-correlation detector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpssDetection {
    pub detected: u32,
    pub theta_hat: u32,
    pub candidate: i32,
    pub f_hat_hz: f64,
    pub metric: f64,
    pub subframes_used: u32,
}

impl NpssDetection {
    fn none(subframes: usize) -> Self {
        Self {
            detected: 0,
            theta_hat: 0,
            candidate: -1,
            f_hat_hz: f64::NAN,
            metric: f64::NAN,
            subframes_used: subframes as u32,
        }
    }

    fn from_detection(d: &Detection) -> Self {
        Self {
            detected: 1,
            theta_hat: d.theta_hat as u32,
            candidate: d.candidate.map_or(-1, |c| c as i32),
            f_hat_hz: d.f_hat_hz.unwrap_or(f64::NAN),
            metric: d.metric,
            subframes_used: d.subframes_used as u32,
        }
    }
}

/// Simulated downlink. `timing_offset_samples < 0` draws it at random.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpssChannelParams {
    pub snr_db: f64,
    pub cfo_hz: f64,
    pub timing_offset_samples: i64,
    pub channel_kind: NpssChannelKind,
    pub filler: NpssFiller,
    pub doppler_hz: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpssEnergyParams {
    pub p_rf_w: f64,
    pub p_ml_w: f64,
    pub p_ac_w: f64,
    pub t_ml_s: f64,
    pub t_ac_s: f64,
}

pub struct NpssThresholdTable(ThresholdTable);
pub struct NpssMlDetector(MlDetector);
pub struct NpssAcDetector(AcDetector);
pub struct NpssSimulator(DownlinkSimulator);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> NpssStatus {
    match err {
        Error::Dimension { .. } | Error::LagOutOfRange { .. } | Error::NotPowerOfTwo(_) => NpssStatus::Dimension,
        Error::Io(_) => NpssStatus::Io,
        Error::Format { .. } | Error::Config { .. } | Error::UnknownConfigKey { .. } => NpssStatus::Format,
        Error::Statistics(_) | Error::EmptyGrid => NpssStatus::Statistics,
        _ => NpssStatus::InvalidArgument,
    }
}

fn fail(err: Error) -> NpssStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn guard(f: impl FnOnce() -> NpssStatus) -> NpssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(msg);
            NpssStatus::Panic
        }
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            set_error(concat!("`", stringify!($p), "` is null"));
            return NpssStatus::NullPointer;
        })+
    };
}

unsafe fn samples_from(iq: *const f64, n_samples: usize) -> Vec<C64> {
    // SAFETY: the caller guarantees 2 * n_samples readable doubles
    let raw = std::slice::from_raw_parts(iq, 2 * n_samples);
    raw.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

unsafe fn write_samples(x: &[C64], out: *mut f64, capacity: usize, written: *mut usize) -> NpssStatus {
    *written = x.len();
    if capacity < x.len() {
        set_error(format!("buffer holds {capacity} samples, {} needed", x.len()));
        return NpssStatus::BufferTooSmall;
    }
    // SAFETY: the caller guarantees 2 * capacity writable doubles
    let dst = std::slice::from_raw_parts_mut(out, 2 * x.len());
    for (d, v) in dst.chunks_exact_mut(2).zip(x) {
        d[0] = v.re;
        d[1] = v.im;
    }
    NpssStatus::Ok
}

fn boxed<T>(value: T, out: *mut *mut T) -> NpssStatus {
    // SAFETY: out checked non-null by every caller
    unsafe { *out = Box::into_raw(Box::new(value)) };
    NpssStatus::Ok
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn npss_status_str(status: NpssStatus) -> *const c_char {
    let s: &'static CStr = match status {
        NpssStatus::Ok => c"ok",
        NpssStatus::NullPointer => c"null pointer argument",
        NpssStatus::InvalidArgument => c"invalid argument",
        NpssStatus::Dimension => c"wrong number of samples",
        NpssStatus::Io => c"i/o error",
        NpssStatus::Format => c"malformed input file",
        NpssStatus::Statistics => c"not enough calibration statistics",
        NpssStatus::BufferTooSmall => c"output buffer too small",
        NpssStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

/// Copies the calling thread's most recent error message into `buf`
/// (NUL-terminated, truncated to `len`). Returns the full message length,
/// 0 when there is none.
#[no_mangle]
pub unsafe extern "C" fn npss_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Table from explicit per-depth thresholds.
#[no_mangle]
pub unsafe extern "C" fn npss_table_new(
    thresholds: *const f64,
    len: usize,
    fa_target: f64,
    distinctness: f64,
    out: *mut *mut NpssThresholdTable,
) -> NpssStatus {
    guard(|| {
        non_null!(thresholds, out);
        let t = std::slice::from_raw_parts(thresholds, len).to_vec();
        match ThresholdTable::new(t, fa_target, distinctness) {
            Ok(t) => boxed(NpssThresholdTable(t), out),
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn npss_table_all_pass(max_subframes: usize, out: *mut *mut NpssThresholdTable) -> NpssStatus {
    guard(|| {
        non_null!(out);
        boxed(NpssThresholdTable(ThresholdTable::all_pass(max_subframes)), out)
    })
}

/// Reads a table CSV written by `npss calibrate`.
#[no_mangle]
pub unsafe extern "C" fn npss_table_load(path: *const c_char, out: *mut *mut NpssThresholdTable) -> NpssStatus {
    guard(|| {
        non_null!(path, out);
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            set_error("path is not UTF-8");
            return NpssStatus::InvalidArgument;
        };
        match ThresholdTable::load(Path::new(p)) {
            Ok(t) => boxed(NpssThresholdTable(t), out),
            Err(e) => fail(e),
        }
    })
}

/// Calibrates an ML table on white noise.
#[no_mangle]
pub unsafe extern "C" fn npss_table_calibrate(
    noise_runs: usize,
    max_subframes: usize,
    fa_target: f64,
    seed: u64,
    out: *mut *mut NpssThresholdTable,
) -> NpssStatus {
    guard(|| {
        non_null!(out);
        match calibrate_threshold(noise_runs, max_subframes, fa_target, seed) {
            Ok(t) => boxed(NpssThresholdTable(t), out),
            Err(e) => fail(e),
        }
    })
}

/// Threshold applied after `subframes` combined periods.
#[no_mangle]
pub unsafe extern "C" fn npss_table_threshold(table: *const NpssThresholdTable, subframes: usize, out: *mut f64) -> NpssStatus {
    guard(|| {
        non_null!(table, out);
        *out = (*table).0.threshold(subframes);
        NpssStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn npss_table_free(table: *mut NpssThresholdTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// ML detector using a copy of `table`.
#[no_mangle]
pub unsafe extern "C" fn npss_ml_detector_new(table: *const NpssThresholdTable, out: *mut *mut NpssMlDetector) -> NpssStatus {
    guard(|| {
        non_null!(table, out);
        boxed(NpssMlDetector(MlDetector::standard((*table).0.clone())), out)
    })
}

/// Feeds one 10 ms subframe (`NPSS_SUBFRAME_LEN` samples at 240 kHz).
#[no_mangle]
pub unsafe extern "C" fn npss_ml_detector_step(
    det: *mut NpssMlDetector,
    iq: *const f64,
    n_samples: usize,
    out: *mut NpssDetection,
) -> NpssStatus {
    guard(|| {
        non_null!(det, iq, out);
        let x = samples_from(iq, n_samples);
        let d = &mut (*det).0;
        match d.step(&x) {
            Ok(Some(hit)) => *out = NpssDetection::from_detection(&hit),
            Ok(None) => *out = NpssDetection::none(d.subframes()),
            Err(e) => return fail(e),
        }
        NpssStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn npss_ml_detector_free(det: *mut NpssMlDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

#[no_mangle]
pub unsafe extern "C" fn npss_ac_detector_new(table: *const NpssThresholdTable, out: *mut *mut NpssAcDetector) -> NpssStatus {
    guard(|| {
        non_null!(table, out);
        boxed(NpssAcDetector(AcDetector::new((*table).0.clone())), out)
    })
}

/// Feeds one 10 ms frame (`NPSS_FRAME_LEN` samples at 1.92 MHz).
#[no_mangle]
pub unsafe extern "C" fn npss_ac_detector_step(
    det: *mut NpssAcDetector,
    iq: *const f64,
    n_samples: usize,
    out: *mut NpssDetection,
) -> NpssStatus {
    guard(|| {
        non_null!(det, iq, out);
        let x = samples_from(iq, n_samples);
        let d = &mut (*det).0;
        match d.step(&x) {
            Ok(Some(hit)) => *out = NpssDetection::from_detection(&hit),
            Ok(None) => *out = NpssDetection::none(d.subframes()),
            Err(e) => return fail(e),
        }
        NpssStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn npss_ac_detector_free(det: *mut NpssAcDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

#[no_mangle]
pub unsafe extern "C" fn npss_simulator_new(params: *const NpssChannelParams, out: *mut *mut NpssSimulator) -> NpssStatus {
    guard(|| {
        non_null!(params, out);
        let p = *params;
        let timing_offset_samples = usize::try_from(p.timing_offset_samples).ok();
        let cfg = ChannelConfig {
            snr_db: p.snr_db,
            cfo_hz: p.cfo_hz,
            timing_offset_samples,
            channel_kind: match p.channel_kind {
                NpssChannelKind::AwgnOnly => ChannelKind::AwgnOnly,
                NpssChannelKind::TuFading => ChannelKind::TuFading,
            },
            doppler_hz: p.doppler_hz,
            seed: p.seed,
        };
        let layout = FrameLayout {
            filler: match p.filler {
                NpssFiller::RandomQpskOfdm => FillerPolicy::RandomQpskOfdm,
                NpssFiller::Silence => FillerPolicy::Silence,
            },
            ..FrameLayout::default()
        };
        match DownlinkSimulator::new(layout, &cfg) {
            Ok(s) => boxed(NpssSimulator(s), out),
            Err(e) => fail(e),
        }
    })
}

/// Writes the next 10 ms at 240 kHz into `out` (room for `capacity`
/// samples); `written` receives the sample count.
#[no_mangle]
pub unsafe extern "C" fn npss_simulator_next_subframe(
    sim: *mut NpssSimulator,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> NpssStatus {
    guard(|| {
        non_null!(sim, out, written);
        if capacity < NPSS_SUBFRAME_LEN {
            *written = NPSS_SUBFRAME_LEN;
            set_error(format!("buffer holds {capacity} samples, {NPSS_SUBFRAME_LEN} needed"));
            return NpssStatus::BufferTooSmall;
        }
        let x = (*sim).0.next_subframe_240k();
        write_samples(&x, out, capacity, written)
    })
}

/// Writes the next 10 ms at 1.92 MHz.
#[no_mangle]
pub unsafe extern "C" fn npss_simulator_next_frame(
    sim: *mut NpssSimulator,
    out: *mut f64,
    capacity: usize,
    written: *mut usize,
) -> NpssStatus {
    guard(|| {
        non_null!(sim, out, written);
        if capacity < NPSS_FRAME_LEN {
            *written = NPSS_FRAME_LEN;
            set_error(format!("buffer holds {capacity} samples, {NPSS_FRAME_LEN} needed"));
            return NpssStatus::BufferTooSmall;
        }
        let x = (*sim).0.next_frame_1920k();
        write_samples(&x, out, capacity, written)
    })
}

/// NPSS start within each received 1.92 MHz frame and its timing cell.
#[no_mangle]
pub unsafe extern "C" fn npss_simulator_truth(sim: *const NpssSimulator, start_1920k: *mut usize, cell: *mut u32) -> NpssStatus {
    guard(|| {
        non_null!(sim, start_1920k, cell);
        let q = (*sim).0.npss_position_1920k();
        *start_1920k = q;
        *cell = truth_cell(q) as u32;
        NpssStatus::Ok
    })
}

#[no_mangle]
pub unsafe extern "C" fn npss_simulator_free(sim: *mut NpssSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Energy saved per acquisition, in percent.
#[no_mangle]
pub unsafe extern "C" fn npss_energy_savings(params: *const NpssEnergyParams, out: *mut f64) -> NpssStatus {
    guard(|| {
        non_null!(params, out);
        let p = *params;
        let e = EnergyParams {
            p_rf_w: p.p_rf_w,
            p_ml_w: p.p_ml_w,
            p_ac_w: p.p_ac_w,
            t_ml_s: p.t_ml_s,
            t_ac_s: p.t_ac_s,
        };
        match energy_savings(&e) {
            Ok(v) => {
                *out = v;
                NpssStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
