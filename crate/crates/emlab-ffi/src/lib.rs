//! C ABI over the laboratory: run experiments from JSON configs, evaluate
//! registry drifts, and free what the library allocated.
//!
//! Conventions: null pointers yield status codes, never UB; strings are
//! NUL-terminated UTF-8; strings returned through out-parameters are owned
//! by the caller and must be released with `emlab_string_free`. Handles are
//! opaque and must be released with their `_free` function. The header
//! `include/emlab.h` is generated with cbindgen (`cbindgen --config
//! cbindgen.toml --output include/emlab.h`) and committed.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use emlab::config::ExperimentConfig;
use emlab::drift::{builtin, DriftSpec};
use emlab::runner::{outputs_pass, reproduce_json, run};
use emlab::zvonkin::{build_scale_table, ScaleTable};
use emlab::LabError;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidConfig = 3,
    NumericalFailure = 4,
    IoError = 5,
    VersionMismatch = 6,
    /// The experiment ran but an embedded pass/fail check failed; the
    /// result JSON is still produced.
    ChecksFailed = 7,
    /// A panic was caught at the boundary.
    Panic = 8,
}

fn status_of(err: &LabError) -> EmlabStatus {
    match err {
        LabError::InvalidConfig(_)
        | LabError::InvalidGrid(_)
        | LabError::UnknownDrift(_)
        | LabError::UnknownFunctional(_)
        | LabError::Inadmissible(_) => EmlabStatus::InvalidConfig,
        LabError::Numerical(_) => EmlabStatus::NumericalFailure,
        LabError::Io(_) | LabError::Json(_) => EmlabStatus::IoError,
        LabError::VersionMismatch(_) => EmlabStatus::VersionMismatch,
    }
}

/// Opaque drift handle.
pub struct EmlabDrift {
    inner: DriftSpec,
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Human-readable description of a status code (static string).
#[no_mangle]
pub extern "C" fn emlab_status_message(status: EmlabStatus) -> *const c_char {
    let msg: &'static str = match status {
        EmlabStatus::Ok => "ok\0",
        EmlabStatus::NullPointer => "null pointer argument\0",
        EmlabStatus::InvalidUtf8 => "string is not valid UTF-8\0",
        EmlabStatus::InvalidConfig => "invalid configuration or unknown registry name\0",
        EmlabStatus::NumericalFailure => "numerical assertion failed\0",
        EmlabStatus::IoError => "I/O or serialization error\0",
        EmlabStatus::VersionMismatch => "results file does not match this binary version\0",
        EmlabStatus::ChecksFailed => "experiment ran but embedded checks failed\0",
        EmlabStatus::Panic => "internal panic caught at the FFI boundary\0",
    };
    msg.as_ptr() as *const c_char
}

unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, EmlabStatus> {
    if ptr.is_null() {
        return Err(EmlabStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| EmlabStatus::InvalidUtf8)
}

fn give_string(s: String, out: *mut *mut c_char) -> EmlabStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            EmlabStatus::Ok
        }
        Err(_) => EmlabStatus::IoError,
    }
}

/// Runs one experiment from a JSON config and hands back the results JSON.
///
/// On `Ok` (and on `ChecksFailed`) `*out_json` holds a NUL-terminated
/// string owned by the caller; free it with `emlab_string_free`.
///
/// # Safety
/// `config_json` must be a valid NUL-terminated string or null;
/// `out_json` must point to writable pointer storage.
#[no_mangle]
pub unsafe extern "C" fn emlab_run_json(
    config_json: *const c_char,
    out_json: *mut *mut c_char,
) -> EmlabStatus {
    if out_json.is_null() {
        return EmlabStatus::NullPointer;
    }
    *out_json = std::ptr::null_mut();
    let text = match read_str(config_json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<(String, bool), LabError> {
        let config = ExperimentConfig::from_json(text)?;
        let result = run(&config)?;
        Ok((result.to_json()?, outputs_pass(&result.outputs)))
    }));
    match outcome {
        Ok(Ok((json, pass))) => {
            let status = give_string(json, out_json);
            if status == EmlabStatus::Ok && !pass {
                EmlabStatus::ChecksFailed
            } else {
                status
            }
        }
        Ok(Err(err)) => status_of(&err),
        Err(_) => EmlabStatus::Panic,
    }
}

/// Re-executes the config embedded in a results JSON and reports the
/// comparison verdict as JSON (owned by the caller).
///
/// # Safety
/// As for [`emlab_run_json`].
#[no_mangle]
pub unsafe extern "C" fn emlab_reproduce_json(
    results_json: *const c_char,
    out_verdict_json: *mut *mut c_char,
) -> EmlabStatus {
    if out_verdict_json.is_null() {
        return EmlabStatus::NullPointer;
    }
    *out_verdict_json = std::ptr::null_mut();
    let text = match read_str(results_json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<(String, bool), LabError> {
        let verdict = reproduce_json(text)?;
        let identical = verdict.identical;
        Ok((verdict.to_json()?, identical))
    }));
    match outcome {
        Ok(Ok((json, identical))) => {
            let status = give_string(json, out_verdict_json);
            if status == EmlabStatus::Ok && !identical {
                EmlabStatus::ChecksFailed
            } else {
                status
            }
        }
        Ok(Err(err)) => status_of(&err),
        Err(_) => EmlabStatus::Panic,
    }
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously handed out by this library through an
/// out-parameter, or null.
#[no_mangle]
pub unsafe extern "C" fn emlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a drift handle from the registry. `param` may be null (builtin
/// default). Returns null on unknown names or invalid parameters.
///
/// # Safety
/// `name` must be a valid NUL-terminated string; `param` null or valid.
#[no_mangle]
pub unsafe extern "C" fn emlab_drift_new(
    name: *const c_char,
    dimension: usize,
    param: *const f64,
) -> *mut EmlabDrift {
    let Ok(name) = read_str(name) else { return std::ptr::null_mut() };
    let param = if param.is_null() { None } else { Some(*param) };
    match builtin(name, dimension, param) {
        Ok(inner) => Box::into_raw(Box::new(EmlabDrift { inner })),
        Err(_) => std::ptr::null_mut(),
    }
}

/// Evaluates b(x) into `out` (both of length `len`, which must equal the
/// drift's dimension).
///
/// # Safety
/// `drift` must come from [`emlab_drift_new`]; `x` and `out` must point to
/// `len` readable/writable doubles.
#[no_mangle]
pub unsafe extern "C" fn emlab_drift_eval(
    drift: *const EmlabDrift,
    x: *const f64,
    len: usize,
    out: *mut f64,
) -> EmlabStatus {
    if drift.is_null() || x.is_null() || out.is_null() {
        return EmlabStatus::NullPointer;
    }
    let drift = &(*drift).inner;
    if len != drift.dimension() {
        return EmlabStatus::InvalidConfig;
    }
    let xs = std::slice::from_raw_parts(x, len);
    let os = std::slice::from_raw_parts_mut(out, len);
    drift.evaluate(xs, os);
    EmlabStatus::Ok
}

/// The declared sup-norm bound of a drift handle (NaN for null).
///
/// # Safety
/// `drift` must come from [`emlab_drift_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn emlab_drift_sup_bound(drift: *const EmlabDrift) -> f64 {
    if drift.is_null() {
        return f64::NAN;
    }
    (*drift).inner.sup_bound()
}

/// Releases a drift handle.
///
/// # Safety
/// `drift` must come from [`emlab_drift_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn emlab_drift_free(drift: *mut EmlabDrift) {
    if !drift.is_null() {
        drop(Box::from_raw(drift));
    }
}

/// Opaque scale-transform handle (one-dimensional drifts only).
pub struct EmlabScaleTable {
    inner: ScaleTable,
}

/// Tabulates the drift-removing scale function of a scalar registry drift
/// around `center` on `[center - radius, center + radius]` with step
/// `step`. Returns null on invalid parameters.
///
/// # Safety
/// `drift_name` must be a valid NUL-terminated string; `param` null or
/// valid.
#[no_mangle]
pub unsafe extern "C" fn emlab_scale_table_new(
    drift_name: *const c_char,
    param: *const f64,
    center: f64,
    radius: f64,
    step: f64,
) -> *mut EmlabScaleTable {
    let Ok(name) = read_str(drift_name) else { return std::ptr::null_mut() };
    let param = if param.is_null() { None } else { Some(*param) };
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let drift = builtin(name, 1, param)?;
        build_scale_table(&drift, center, radius, step)
    }));
    match outcome {
        Ok(Ok(inner)) => Box::into_raw(Box::new(EmlabScaleTable { inner })),
        _ => std::ptr::null_mut(),
    }
}

/// Evaluates the scale function at `x` (must lie inside the table).
///
/// # Safety
/// `table` must come from [`emlab_scale_table_new`]; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn emlab_scale_table_phi(
    table: *const EmlabScaleTable,
    x: f64,
    out: *mut f64,
) -> EmlabStatus {
    if table.is_null() || out.is_null() {
        return EmlabStatus::NullPointer;
    }
    match (*table).inner.phi_at(x) {
        Ok(v) => {
            *out = v;
            EmlabStatus::Ok
        }
        Err(_) => EmlabStatus::NumericalFailure,
    }
}

/// Evaluates the inverse scale function at `y` (must lie in the range of
/// phi).
///
/// # Safety
/// As for [`emlab_scale_table_phi`].
#[no_mangle]
pub unsafe extern "C" fn emlab_scale_table_psi(
    table: *const EmlabScaleTable,
    y: f64,
    out: *mut f64,
) -> EmlabStatus {
    if table.is_null() || out.is_null() {
        return EmlabStatus::NullPointer;
    }
    match (*table).inner.invert(y) {
        Ok(v) => {
            *out = v;
            EmlabStatus::Ok
        }
        Err(_) => EmlabStatus::NumericalFailure,
    }
}

/// Releases a scale-table handle.
///
/// # Safety
/// `table` must come from [`emlab_scale_table_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn emlab_scale_table_free(table: *mut EmlabScaleTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}
