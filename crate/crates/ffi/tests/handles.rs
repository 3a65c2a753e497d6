use std::ffi::{CStr, CString};
use std::ptr;

use jumpsupport_ffi::*;

fn last_error() -> String {
    let p = js_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn run_bundled(name: &str, threads: usize) -> (i32, String) {
    let name = CString::new(name).unwrap();
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(js_scenario_load(name.as_ptr(), &mut sc), JsStatus::Ok);
        assert_eq!(js_scenario_set_threads(sc, threads), JsStatus::Ok);
        let mut rep = ptr::null_mut();
        assert_eq!(js_run(sc, &mut rep), JsStatus::Ok, "{}", last_error());
        let passed = js_report_passed(rep);
        let json = CStr::from_ptr(js_report_json(rep)).to_str().unwrap().to_owned();
        js_report_free(rep);
        js_scenario_free(sc);
        (passed, json)
    }
}

#[test]
fn bundled_trivial_scenario_runs_and_passes() {
    let (passed, json) = run_bundled("trivial_constant", 1);
    assert_eq!(passed, 1);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["experiment"], "constant_path");
}

#[test]
fn report_is_identical_across_worker_counts() {
    assert_eq!(run_bundled("poisson_law", 1).1, run_bundled("poisson_law", 4).1);
}

#[test]
fn malformed_json_reports_parse_location() {
    let text = CString::new("{\"name\": \"x\",\n \"model\": 3}").unwrap();
    let mut sc = ptr::null_mut();
    let status = unsafe { js_scenario_from_json(text.as_ptr(), &mut sc) };
    assert_ne!(status, JsStatus::Ok);
    assert!(sc.is_null());
    let msg = last_error();
    assert!(msg.contains("line 2"), "{msg}");
}

#[test]
fn unknown_bundled_name_is_config_error() {
    let name = CString::new("no_such_scenario").unwrap();
    let mut sc = ptr::null_mut();
    assert_eq!(unsafe { js_scenario_load(name.as_ptr(), &mut sc) }, JsStatus::Config);
    assert!(last_error().contains("no_such_scenario"));
}

#[test]
fn null_arguments_are_rejected() {
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(js_scenario_from_json(ptr::null(), &mut sc), JsStatus::NullPointer);
        assert_eq!(js_scenario_set_paths(ptr::null_mut(), 10), JsStatus::NullPointer);
        let mut rep = ptr::null_mut();
        assert_eq!(js_run(ptr::null(), &mut rep), JsStatus::NullPointer);
        assert_eq!(js_report_passed(ptr::null()), -1);
        assert!(js_report_json(ptr::null()).is_null());
        js_scenario_free(ptr::null_mut());
        js_report_free(ptr::null_mut());
    }
}

#[test]
fn zero_paths_is_invalid() {
    let name = CString::new("trivial_constant").unwrap();
    let mut sc = ptr::null_mut();
    unsafe {
        assert_eq!(js_scenario_load(name.as_ptr(), &mut sc), JsStatus::Ok);
        assert_eq!(js_scenario_set_paths(sc, 0), JsStatus::InvalidArgument);
        js_scenario_free(sc);
    }
}

#[test]
fn clopper_pearson_zero_hits() {
    let (mut lo, mut hi) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { js_clopper_pearson(0, 10_000, 0.05, &mut lo, &mut hi) }, JsStatus::Ok);
    assert_eq!(lo, 0.0);
    // 1 − (α/2)^{1/n}
    let exact = 1.0 - 0.025f64.powf(1.0 / 10_000.0);
    assert!((hi - exact).abs() < 1e-9 * exact);
    assert_eq!(
        unsafe { js_clopper_pearson(5, 3, 0.05, &mut lo, &mut hi) },
        JsStatus::InvalidArgument
    );
}

#[test]
fn report_write_creates_files() {
    let dir = std::env::temp_dir().join(format!("jumpsupport-ffi-{}", std::process::id()));
    let name = CString::new("trivial_constant").unwrap();
    let out = CString::new(dir.to_str().unwrap()).unwrap();
    let mut sc = ptr::null_mut();
    let mut rep = ptr::null_mut();
    unsafe {
        assert_eq!(js_scenario_load(name.as_ptr(), &mut sc), JsStatus::Ok);
        assert_eq!(js_run(sc, &mut rep), JsStatus::Ok);
        assert_eq!(js_report_write(rep, out.as_ptr()), JsStatus::Ok);
        js_report_free(rep);
        js_scenario_free(sc);
    }
    assert!(dir.join("report.json").exists());
    assert!(dir.join("timing.json").exists());
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(js_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn generated_header_declares_every_export() {
    let header = include_str!("../include/jumpsupport.h");
    for sym in [
        "js_last_error_message",
        "js_version",
        "js_scenario_from_json",
        "js_scenario_load",
        "js_scenario_set_paths",
        "js_scenario_set_seed",
        "js_scenario_set_threads",
        "js_scenario_free",
        "js_run",
        "js_report_passed",
        "js_report_json",
        "js_report_write",
        "js_report_free",
        "js_clopper_pearson",
        "typedef struct JsScenario JsScenario",
    ] {
        assert!(header.contains(sym), "missing {sym}");
    }
}
