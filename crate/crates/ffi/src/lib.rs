//! C ABI over the cfucb simulator.
//!
//! Every function returns a [`CfucbStatus`]; on failure a message is
//! available from [`cfucb_last_error`] on the same thread until the next call.
//! Strings returned to the caller are released with [`cfucb_string_free`],
//! experiment handles with [`cfucb_experiment_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cfucb::harness::output::{summary_json, write_outputs};
use cfucb::harness::{run_experiment, ExperimentConfig, ExperimentResult};
use cfucb::theory::{lambert_w_minus1, q_function, theorem1_threshold, QParams};
use cfucb::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfucbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    DomainError = 4,
    NoConvergence = 5,
    NotRun = 6,
    BufferTooSmall = 7,
    Io = 8,
    Internal = 9,
    Panic = 10,
}

/// Series selector for [`cfucb_experiment_copy_series`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfucbGroup {
    OptedIn = 0,
    OptedOut = 1,
    All = 2,
}

/// Opaque experiment handle.
pub struct CfucbExperiment {
    config: ExperimentConfig,
    result: Option<ExperimentResult>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> CfucbStatus {
    match err {
        Error::Config(_)
        | Error::ModelConfig(_)
        | Error::InvalidDimension(_)
        | Error::Parse { .. } => CfucbStatus::InvalidConfig,
        Error::Domain(_) | Error::XTooSmall { .. } => CfucbStatus::DomainError,
        Error::NoConvergence(_) => CfucbStatus::NoConvergence,
        Error::Io(_) => CfucbStatus::Io,
        _ => CfucbStatus::Internal,
    }
}

fn fail(err: Error) -> CfucbStatus {
    set_error(err.to_string());
    status_of(&err)
}

/// Clears the last error, runs `f` and converts panics into a status.
fn guard(f: impl FnOnce() -> CfucbStatus) -> CfucbStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("panic inside cfucb");
            CfucbStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, CfucbStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(CfucbStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not valid UTF-8");
        CfucbStatus::InvalidUtf8
    })
}

macro_rules! non_null {
    ($p:expr) => {
        if $p.is_null() {
            set_error(concat!("null pointer: ", stringify!($p)));
            return CfucbStatus::NullPointer;
        }
    };
}

/// Message describing the last failure on this thread, or null.
///
/// The pointer stays valid until the next cfucb call on this thread.
#[no_mangle]
pub extern "C" fn cfucb_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a config document (empty string for defaults) into a new handle.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_new(
    config_toml: *const c_char,
    out: *mut *mut CfucbExperiment,
) -> CfucbStatus {
    guard(|| {
        non_null!(out);
        *out = ptr::null_mut();
        let text = match read_str(config_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml_str(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(CfucbExperiment {
                    config,
                    result: None,
                }));
                CfucbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// # Safety
/// `handle` must come from [`cfucb_experiment_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_free(handle: *mut CfucbExperiment) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Overrides the base seed and discards any previous result.
///
/// # Safety
/// `handle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_set_seed(
    handle: *mut CfucbExperiment,
    seed: u64,
) -> CfucbStatus {
    guard(|| {
        non_null!(handle);
        let h = &mut *handle;
        h.config.base_seed = seed;
        h.result = None;
        CfucbStatus::Ok
    })
}

/// Runs all replications.
///
/// # Safety
/// `handle` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_run(handle: *mut CfucbExperiment) -> CfucbStatus {
    guard(|| {
        non_null!(handle);
        let h = &mut *handle;
        match run_experiment(&h.config, false) {
            Ok(r) => {
                h.result = Some(r);
                CfucbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

unsafe fn result_of<'a>(
    handle: *const CfucbExperiment,
) -> Result<&'a ExperimentResult, CfucbStatus> {
    if handle.is_null() {
        set_error("null experiment handle");
        return Err(CfucbStatus::NullPointer);
    }
    (*handle).result.as_ref().ok_or_else(|| {
        set_error("experiment has not been run");
        CfucbStatus::NotRun
    })
}

/// Number of events in the averaged regret series.
///
/// # Safety
/// `handle` must be a live handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_series_len(
    handle: *const CfucbExperiment,
    len: *mut usize,
) -> CfucbStatus {
    guard(|| {
        non_null!(len);
        match result_of(handle) {
            Ok(r) => {
                *len = r.series.mean.len();
                CfucbStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Copies the averaged cumulative regret of `group` into `buf`.
///
/// # Safety
/// `buf` must point to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_copy_series(
    handle: *const CfucbExperiment,
    group: CfucbGroup,
    buf: *mut f64,
    capacity: usize,
) -> CfucbStatus {
    guard(|| {
        non_null!(buf);
        let r = match result_of(handle) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let series = match group {
            CfucbGroup::OptedIn => &r.series.mean.opted_in,
            CfucbGroup::OptedOut => &r.series.mean.opted_out,
            CfucbGroup::All => &r.series.mean.all,
        };
        if capacity < series.len() {
            set_error(format!(
                "buffer holds {capacity} values, need {}",
                series.len()
            ));
            return CfucbStatus::BufferTooSmall;
        }
        ptr::copy_nonoverlapping(series.as_ptr(), buf, series.len());
        CfucbStatus::Ok
    })
}

/// Summary as a JSON document. Free with [`cfucb_string_free`].
///
/// # Safety
/// `handle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_summary_json(
    handle: *const CfucbExperiment,
    out: *mut *mut c_char,
) -> CfucbStatus {
    guard(|| {
        non_null!(out);
        *out = ptr::null_mut();
        match result_of(handle) {
            Ok(r) => {
                let json = CString::new(summary_json(&r.summary)).expect("JSON has no NUL bytes");
                *out = json.into_raw();
                CfucbStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// Writes `regret.csv` and `summary.json` into `dir`.
///
/// # Safety
/// `handle` must be a live handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cfucb_experiment_write_outputs(
    handle: *const CfucbExperiment,
    dir: *const c_char,
) -> CfucbStatus {
    guard(|| {
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match result_of(handle) {
            Ok(r) => match write_outputs(r, Path::new(dir)) {
                Ok(()) => CfucbStatus::Ok,
                Err(e) => fail(e),
            },
            Err(s) => s,
        }
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn cfucb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Lower branch of the Lambert W function on `[-1/e, 0)`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfucb_lambert_w_minus1(x: f64, out: *mut f64) -> CfucbStatus {
    guard(|| {
        non_null!(out);
        match lambert_w_minus1(x) {
            Ok(w) => {
                *out = w;
                CfucbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// `q(x) = -B W_{-1}(-(1/B)(x/d)^{-C/B})`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfucb_q_function(
    x: f64,
    b: f64,
    c: f64,
    d: usize,
    out: *mut f64,
) -> CfucbStatus {
    guard(|| {
        non_null!(out);
        match QParams::new(b, c, d).and_then(|p| q_function(x, &p)) {
            Ok(q) => {
                *out = q;
                CfucbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Opted-in population size that makes every arm optimal for at least `d`
/// users with probability `1 - eps`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cfucb_theorem1_threshold(
    n_arms: usize,
    d: usize,
    eps: f64,
    out: *mut usize,
) -> CfucbStatus {
    guard(|| {
        non_null!(out);
        match theorem1_threshold(n_arms, d, eps) {
            Ok(t) => {
                *out = t;
                CfucbStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
