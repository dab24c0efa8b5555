//! C ABI over the scenario runner.
//!
//! Handles are opaque and owned by the caller until passed to the matching
//! `_free`. Every fallible call returns a `DechistStatus`; on failure the
//! message is available from `dechist_last_error` on the same thread until
//! the next call.

use dechist::qbm::{self, QbmParams};
use dechist::scenario::{self, ResultBundle, Scenario, ScenarioError};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Status codes. Values 1–3 match the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DechistStatus {
    Ok = 0,
    Runtime = 1,
    Invalid = 2,
    Guard = 3,
    Io = 4,
    NullArgument = 5,
    NotFound = 6,
    Panic = 7,
}

/// A parsed, validated scenario.
pub struct DechistScenario(Scenario);

/// The result of running a scenario.
pub struct DechistResult {
    bundle: ResultBundle,
    keys: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: DechistStatus, msg: &str) -> DechistStatus {
    set_error(msg);
    status
}

fn from_scenario_error(e: ScenarioError) -> DechistStatus {
    let status = match e.exit_code() {
        2 => DechistStatus::Invalid,
        3 => DechistStatus::Guard,
        _ if matches!(e, ScenarioError::Io(_)) => DechistStatus::Io,
        _ => DechistStatus::Runtime,
    };
    fail(status, &e.to_string())
}

fn guarded(f: impl FnOnce() -> DechistStatus) -> DechistStatus {
    set_error("");
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DechistStatus::Panic, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, DechistStatus> {
    if p.is_null() {
        return Err(fail(DechistStatus::NullArgument, &format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(DechistStatus::Invalid, &format!("{name} is not UTF-8")))
}

fn store_scenario(r: Result<Scenario, ScenarioError>, out: *mut *mut DechistScenario) -> DechistStatus {
    match r {
        Ok(s) => {
            unsafe { *out = Box::into_raw(Box::new(DechistScenario(s))) };
            DechistStatus::Ok
        }
        Err(e) => from_scenario_error(e),
    }
}

/// Message for the most recent failure on this thread; empty after success.
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn dechist_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dechist_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses scenario JSON text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dechist_scenario_parse(text: *const c_char, out: *mut *mut DechistScenario) -> DechistStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DechistStatus::NullArgument, "out is null");
        }
        match str_arg(text, "text") {
            Ok(t) => store_scenario(Scenario::parse(t), out),
            Err(s) => s,
        }
    })
}

/// Loads a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dechist_scenario_load(path: *const c_char, out: *mut *mut DechistScenario) -> DechistStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DechistStatus::NullArgument, "out is null");
        }
        match str_arg(path, "path") {
            Ok(p) => store_scenario(Scenario::load(Path::new(p)), out),
            Err(s) => s,
        }
    })
}

/// Looks up a bundled scenario by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dechist_scenario_bundled(name: *const c_char, out: *mut *mut DechistScenario) -> DechistStatus {
    guarded(|| {
        if out.is_null() {
            return fail(DechistStatus::NullArgument, "out is null");
        }
        let name = match str_arg(name, "name") {
            Ok(n) => n,
            Err(s) => return s,
        };
        match scenario::bundled(name) {
            Some(b) => store_scenario(Scenario::parse(b.text), out),
            None => fail(DechistStatus::NotFound, &format!("no bundled scenario named `{name}`")),
        }
    })
}

/// Number of bundled scenarios.
#[no_mangle]
pub extern "C" fn dechist_bundled_count() -> usize {
    scenario::BUNDLED.len()
}

/// Name of the i-th bundled scenario as a static string, or null when out of range.
#[no_mangle]
pub extern "C" fn dechist_bundled_name(i: usize) -> *const c_char {
    static NAMES: std::sync::OnceLock<Vec<CString>> = std::sync::OnceLock::new();
    let names = NAMES.get_or_init(|| scenario::BUNDLED.iter().map(|b| CString::new(b.name).expect("plain name")).collect());
    names.get(i).map_or(ptr::null(), |c| c.as_ptr())
}

/// Replaces the scenario seed.
///
/// # Safety
/// `s` must come from a `dechist_scenario_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn dechist_scenario_set_seed(s: *mut DechistScenario, seed: u64) -> DechistStatus {
    guarded(|| match s.as_mut() {
        Some(s) => {
            s.0.seed = seed;
            DechistStatus::Ok
        }
        None => fail(DechistStatus::NullArgument, "scenario is null"),
    })
}

/// Runs the scenario. `threads` = 0 uses the global pool.
///
/// # Safety
/// `s` must come from a `dechist_scenario_*` constructor and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dechist_scenario_run(s: *const DechistScenario, threads: usize, out: *mut *mut DechistResult) -> DechistStatus {
    guarded(|| {
        let Some(s) = s.as_ref() else {
            return fail(DechistStatus::NullArgument, "scenario is null");
        };
        if out.is_null() {
            return fail(DechistStatus::NullArgument, "out is null");
        }
        let r = if threads == 0 { s.0.run() } else { s.0.run_with_threads(threads) };
        match r {
            Ok(bundle) => {
                let keys = bundle.summary.iter().map(|(k, _)| CString::new(k.as_str()).unwrap_or_default()).collect();
                *out = Box::into_raw(Box::new(DechistResult { bundle, keys }));
                DechistStatus::Ok
            }
            Err(e) => from_scenario_error(e),
        }
    })
}

/// # Safety
/// `s` must come from a `dechist_scenario_*` constructor, or be null.
#[no_mangle]
pub unsafe extern "C" fn dechist_scenario_free(s: *mut DechistScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of summary entries.
///
/// # Safety
/// `r` must come from `dechist_scenario_run`.
#[no_mangle]
pub unsafe extern "C" fn dechist_result_summary_len(r: *const DechistResult) -> usize {
    r.as_ref().map_or(0, |r| r.bundle.summary.len())
}

/// Key of the i-th summary entry, owned by the result; null when out of range.
///
/// # Safety
/// `r` must come from `dechist_scenario_run`.
#[no_mangle]
pub unsafe extern "C" fn dechist_result_summary_key(r: *const DechistResult, i: usize) -> *const c_char {
    r.as_ref().and_then(|r| r.keys.get(i)).map_or(ptr::null(), |k| k.as_ptr())
}

/// Value of the i-th summary entry.
///
/// # Safety
/// `r` must come from `dechist_scenario_run` and `value` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dechist_result_summary_value(r: *const DechistResult, i: usize, value: *mut f64) -> DechistStatus {
    guarded(|| {
        let (Some(r), false) = (r.as_ref(), value.is_null()) else {
            return fail(DechistStatus::NullArgument, "result or value is null");
        };
        match r.bundle.summary.get(i) {
            Some((_, v)) => {
                *value = *v;
                DechistStatus::Ok
            }
            None => fail(DechistStatus::NotFound, &format!("index {i} out of range")),
        }
    })
}

/// Summary value by key.
///
/// # Safety
/// `r` must come from `dechist_scenario_run`, `key` be NUL-terminated and `value` valid.
#[no_mangle]
pub unsafe extern "C" fn dechist_result_get(r: *const DechistResult, key: *const c_char, value: *mut f64) -> DechistStatus {
    guarded(|| {
        let (Some(r), false) = (r.as_ref(), value.is_null()) else {
            return fail(DechistStatus::NullArgument, "result or value is null");
        };
        let key = match str_arg(key, "key") {
            Ok(k) => k,
            Err(s) => return s,
        };
        match r.bundle.get(key) {
            Some(v) => {
                *value = v;
                DechistStatus::Ok
            }
            None => fail(DechistStatus::NotFound, &format!("no summary key `{key}`")),
        }
    })
}

/// Writes `summary.json` and the CSV tables into `dir`.
///
/// # Safety
/// `r` must come from `dechist_scenario_run` and `dir` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dechist_result_write(r: *const DechistResult, dir: *const c_char) -> DechistStatus {
    guarded(|| {
        let Some(r) = r.as_ref() else {
            return fail(DechistStatus::NullArgument, "result is null");
        };
        match str_arg(dir, "dir") {
            Ok(d) => match scenario::write_bundle(&r.bundle, Path::new(d)) {
                Ok(_) => DechistStatus::Ok,
                Err(e) => from_scenario_error(e),
            },
            Err(s) => s,
        }
    })
}

/// # Safety
/// `r` must come from `dechist_scenario_run`, or be null.
#[no_mangle]
pub unsafe extern "C" fn dechist_result_free(r: *mut DechistResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Off-diagonal suppression exponent 2Mγk_BTσ²/ħ². `cgs` selects CGS
/// constants with T in kelvin; otherwise k_B = ħ = 1.
///
/// # Safety
/// `value` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dechist_qbm_suppression_exponent(
    mass: f64,
    gamma: f64,
    temperature: f64,
    sigma: f64,
    cgs: bool,
    value: *mut f64,
) -> DechistStatus {
    guarded(|| {
        if value.is_null() {
            return fail(DechistStatus::NullArgument, "value is null");
        }
        let p = if cgs { QbmParams::cgs(mass, gamma, temperature, sigma) } else { QbmParams::natural(mass, gamma, temperature, sigma) };
        match qbm::suppression_exponent(&p) {
            Ok(v) => {
                *value = v;
                DechistStatus::Ok
            }
            Err(e) => from_scenario_error(e.into()),
        }
    })
}
