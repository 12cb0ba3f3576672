//! C ABI over the visia engine.
//!
//! Objects are opaque handles created and destroyed through this API. Every
//! fallible call returns a [`VisiaStatus`]; on failure the message is
//! available from [`visia_last_error`] on the same thread until the next
//! failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use visia::params::PlannerParams;
use visia::replan::Mode;
use visia::sim::{self, RunOutput, RunStatus};
use visia::world::Scenario;
use visia::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisiaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Io = 4,
    Internal = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VisiaMode {
    VisibilityAware = 0,
    ClearanceOnly = 1,
}

/// Scalar metrics of a finished run. `exit_code` is 0 ok, 2 degraded,
/// 3 timeout.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct VisiaMetrics {
    pub ft: f64,
    pub cr: f64,
    pub or_: f64,
    pub vae: f64,
    pub cl_mean: f64,
    pub cl_max: f64,
    pub frames: u64,
    pub replans: u64,
    pub exit_code: i32,
}

/// Opaque scenario handle.
pub struct VisiaScenario(Scenario);

/// Opaque run result handle.
pub struct VisiaRun(RunOutput);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn fail(status: VisiaStatus, msg: impl Into<String>) -> VisiaStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> VisiaStatus {
    let status = match &e {
        Error::Io { .. } => VisiaStatus::Io,
        Error::Parse(_) => VisiaStatus::Parse,
        _ => VisiaStatus::InvalidArgument,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> VisiaStatus) -> VisiaStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(VisiaStatus::Internal, "internal panic"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, VisiaStatus> {
    if p.is_null() {
        return Err(fail(VisiaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VisiaStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

/// Message for the last failing call on this thread, or an empty string.
/// The pointer stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn visia_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// `CR * (100 - OR) / FT` with CR and OR in percent.
#[no_mangle]
pub extern "C" fn visia_vae(cr: f64, or_: f64, ft: f64) -> f64 {
    sim::vae(cr, or_, ft)
}

/// Parses a scenario document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visia_scenario_from_json(json: *const c_char, out: *mut *mut VisiaScenario) -> VisiaStatus {
    guard(|| {
        if out.is_null() {
            return fail(VisiaStatus::NullPointer, "out is null");
        }
        let text = match str_arg(json, "json") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match Scenario::from_json(text) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(VisiaScenario(s)));
                VisiaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Loads one of the built-in scenes by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visia_scenario_builtin(name: *const c_char, out: *mut *mut VisiaScenario) -> VisiaStatus {
    guard(|| {
        if out.is_null() {
            return fail(VisiaStatus::NullPointer, "out is null");
        }
        let name = match str_arg(name, "name") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match visia::scenes::builtin(name) {
            Ok(s) => {
                *out = Box::into_raw(Box::new(VisiaScenario(s)));
                VisiaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Re-derives the scenario's seeded content with a new seed.
///
/// # Safety
/// `scenario` must come from this API and not be freed.
#[no_mangle]
pub unsafe extern "C" fn visia_scenario_set_seed(scenario: *mut VisiaScenario, seed: u64) -> VisiaStatus {
    guard(|| {
        let Some(s) = scenario.as_mut() else {
            return fail(VisiaStatus::NullPointer, "scenario is null");
        };
        match s.0.with_seed(seed) {
            Ok(n) => {
                s.0 = n;
                VisiaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `scenario` must come from this API; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn visia_scenario_free(scenario: *mut VisiaScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Flies the scenario closed-loop. `budget_ms <= 0` keeps the default
/// per-call replanning budget.
///
/// # Safety
/// `scenario` must come from this API and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visia_run(scenario: *const VisiaScenario, mode: VisiaMode, budget_ms: f64, out: *mut *mut VisiaRun) -> VisiaStatus {
    guard(|| {
        let Some(s) = scenario.as_ref() else {
            return fail(VisiaStatus::NullPointer, "scenario is null");
        };
        if out.is_null() {
            return fail(VisiaStatus::NullPointer, "out is null");
        }
        let mut params = PlannerParams::default();
        if budget_ms > 0.0 {
            params.budget_ms = budget_ms;
        } else if budget_ms.is_nan() {
            return fail(VisiaStatus::InvalidArgument, "budget_ms is NaN");
        }
        let mode = match mode {
            VisiaMode::VisibilityAware => Mode::VisibilityAware,
            VisiaMode::ClearanceOnly => Mode::ClearanceOnly,
        };
        match sim::run(&s.0, &params, mode) {
            Ok(r) => {
                *out = Box::into_raw(Box::new(VisiaRun(r)));
                VisiaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must come from this API and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visia_run_metrics(run: *const VisiaRun, out: *mut VisiaMetrics) -> VisiaStatus {
    guard(|| {
        let (Some(r), Some(o)) = (run.as_ref(), out.as_mut()) else {
            return fail(VisiaStatus::NullPointer, "run or out is null");
        };
        let rep = &r.0.report;
        *o = VisiaMetrics {
            ft: rep.ft,
            cr: rep.cr,
            or_: rep.or,
            vae: rep.vae,
            cl_mean: rep.cl_mean,
            cl_max: rep.cl_max,
            frames: rep.frames as u64,
            replans: rep.replans.len() as u64,
            exit_code: rep.status.exit_code(),
        };
        VisiaStatus::Ok
    })
}

/// Full run report as a JSON string, released with [`visia_string_free`].
///
/// # Safety
/// `run` must come from this API and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visia_run_report_json(run: *const VisiaRun, out: *mut *mut c_char) -> VisiaStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(VisiaStatus::NullPointer, "run is null");
        };
        if out.is_null() {
            return fail(VisiaStatus::NullPointer, "out is null");
        }
        let text = serde_json::to_string(&r.0.report).expect("report serializes");
        *out = CString::new(text).expect("JSON has no NUL").into_raw();
        VisiaStatus::Ok
    })
}

/// Frames as CSV (`t,x,y,z,theta,psi,occluded`), released with
/// [`visia_string_free`].
///
/// # Safety
/// `run` must come from this API and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn visia_run_frames_csv(run: *const VisiaRun, out: *mut *mut c_char) -> VisiaStatus {
    guard(|| {
        let Some(r) = run.as_ref() else {
            return fail(VisiaStatus::NullPointer, "run is null");
        };
        if out.is_null() {
            return fail(VisiaStatus::NullPointer, "out is null");
        }
        *out = CString::new(sim::frames_csv(&r.0.frames)).expect("CSV has no NUL").into_raw();
        VisiaStatus::Ok
    })
}

/// True when the run finished without degradation or timeout.
///
/// # Safety
/// `run` must come from this API; null yields false.
#[no_mangle]
pub unsafe extern "C" fn visia_run_ok(run: *const VisiaRun) -> bool {
    run.as_ref().is_some_and(|r| r.0.report.status == RunStatus::Ok)
}

/// # Safety
/// `run` must come from this API; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn visia_run_free(run: *mut VisiaRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `s` must be a string returned by this API; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn visia_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
