//! C ABI over the `jumpsupport` scenario runner.
//!
//! Scenarios and reports are opaque handles created and released through this
//! interface. Every fallible call returns a [`JsStatus`]; on failure the message
//! for the calling thread is available from [`js_last_error_message`] until the
//! next failing call on that thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use jumpsupport::cli::{load_scenario, run_scenario, RunOutcome, ScenarioConfig};
use jumpsupport::stats::clopper_pearson;
use jumpsupport::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Model = 4,
    Numeric = 5,
    LowAcceptance = 6,
    Io = 7,
    Parse = 8,
    InvalidArgument = 9,
    Panic = 10,
}

/// A parsed scenario configuration.
pub struct JsScenario {
    config: ScenarioConfig,
}

/// The result of running a scenario.
pub struct JsReport {
    outcome: RunOutcome,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> JsStatus {
    match err {
        Error::Config(_) => JsStatus::Config,
        Error::Model(_) => JsStatus::Model,
        Error::Numeric { .. } => JsStatus::Numeric,
        Error::LowAcceptance { .. } => JsStatus::LowAcceptance,
        Error::Io(_) => JsStatus::Io,
        Error::Parse(_) => JsStatus::Parse,
    }
}

fn fail(status: JsStatus, msg: impl Into<String>) -> JsStatus {
    set_error(msg);
    status
}

fn from_error(err: Error) -> JsStatus {
    let status = status_of(&err);
    fail(status, err.to_string())
}

fn guarded(f: impl FnOnce() -> JsStatus) -> JsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(JsStatus::Panic, "internal panic"),
    }
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, JsStatus> {
    if ptr.is_null() {
        return Err(fail(JsStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(JsStatus::InvalidUtf8, "string argument is not valid UTF-8"))
}

unsafe fn write_scenario(out: *mut *mut JsScenario, config: ScenarioConfig) -> JsStatus {
    *out = Box::into_raw(Box::new(JsScenario { config }));
    JsStatus::Ok
}

/// Message for the last failing call on this thread, or null if none.
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn js_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn js_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a JSON scenario document.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn js_scenario_from_json(json: *const c_char, out: *mut *mut JsScenario) -> JsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(JsStatus::NullPointer, "null output pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ScenarioConfig::from_json(text) {
            Ok(c) => write_scenario(out, c),
            Err(e) => from_error(e),
        }
    })
}

/// Loads a scenario from a file path or a bundled scenario name.
///
/// # Safety
/// `spec` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn js_scenario_load(spec: *const c_char, out: *mut *mut JsScenario) -> JsStatus {
    guarded(|| {
        if out.is_null() {
            return fail(JsStatus::NullPointer, "null output pointer");
        }
        let spec = match read_str(spec) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match load_scenario(spec) {
            Ok(c) => write_scenario(out, c),
            Err(e) => from_error(e),
        }
    })
}

/// Overrides the path count. Zero is rejected.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn js_scenario_set_paths(scenario: *mut JsScenario, n_paths: usize) -> JsStatus {
    let Some(s) = scenario.as_mut() else {
        return fail(JsStatus::NullPointer, "null scenario");
    };
    if n_paths == 0 {
        return fail(JsStatus::InvalidArgument, "n_paths must be positive");
    }
    s.config.execution.n_paths = n_paths;
    JsStatus::Ok
}

/// Overrides the master seed.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn js_scenario_set_seed(scenario: *mut JsScenario, seed: u64) -> JsStatus {
    let Some(s) = scenario.as_mut() else {
        return fail(JsStatus::NullPointer, "null scenario");
    };
    s.config.execution.seed = seed;
    JsStatus::Ok
}

/// Sets the worker count; 0 uses all cores. Results do not depend on it.
///
/// # Safety
/// `scenario` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn js_scenario_set_threads(scenario: *mut JsScenario, threads: usize) -> JsStatus {
    let Some(s) = scenario.as_mut() else {
        return fail(JsStatus::NullPointer, "null scenario");
    };
    s.config.execution.threads = threads;
    JsStatus::Ok
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn js_scenario_free(scenario: *mut JsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Runs the scenario's experiment.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn js_run(scenario: *const JsScenario, out: *mut *mut JsReport) -> JsStatus {
    guarded(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(JsStatus::NullPointer, "null scenario");
        };
        if out.is_null() {
            return fail(JsStatus::NullPointer, "null output pointer");
        }
        let outcome = match run_scenario(&s.config) {
            Ok(o) => o,
            Err(e) => return from_error(e),
        };
        let json = match serde_json::to_string_pretty(&outcome.report) {
            Ok(j) => j,
            Err(e) => return from_error(e.into()),
        };
        let json = CString::new(json).expect("JSON has no interior NUL");
        *out = Box::into_raw(Box::new(JsReport { outcome, json }));
        JsStatus::Ok
    })
}

/// 1 if every verdict passed, 0 if one failed, -1 for a null handle.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn js_report_passed(report: *const JsReport) -> i32 {
    match report.as_ref() {
        Some(r) => i32::from(r.outcome.report.passed),
        None => -1,
    }
}

/// The deterministic report as JSON, owned by the handle.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn js_report_json(report: *const JsReport) -> *const c_char {
    report.as_ref().map_or(std::ptr::null(), |r| r.json.as_ptr())
}

/// Writes the report, summary, timing and artifacts into `dir`.
///
/// # Safety
/// `report` must be a live handle and `dir` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn js_report_write(report: *const JsReport, dir: *const c_char) -> JsStatus {
    guarded(|| {
        let Some(r) = report.as_ref() else {
            return fail(JsStatus::NullPointer, "null report");
        };
        let dir = match read_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match r.outcome.write_to(Path::new(dir)) {
            Ok(()) => JsStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// Releases a report. Null is ignored.
///
/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn js_report_free(report: *mut JsReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Two-sided Clopper–Pearson interval at level `1 - alpha`.
///
/// # Safety
/// `lower` and `upper` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn js_clopper_pearson(
    hits: u64,
    trials: u64,
    alpha: f64,
    lower: *mut f64,
    upper: *mut f64,
) -> JsStatus {
    if lower.is_null() || upper.is_null() {
        return fail(JsStatus::NullPointer, "null output pointer");
    }
    if trials == 0 || hits > trials || !(alpha > 0.0 && alpha < 1.0) {
        return fail(
            JsStatus::InvalidArgument,
            format!("need 0 <= hits <= trials, trials > 0, alpha in (0,1); got {hits}/{trials}, {alpha}"),
        );
    }
    let (lo, hi) = clopper_pearson(hits, trials, alpha);
    *lower = lo;
    *upper = hi;
    JsStatus::Ok
}
