//! C interface to `kmseries`.
//!
//! Every entry point returns a [`KmStatus`]. On failure the message is kept
//! per thread and can be read with [`km_last_error`]. Strings handed out by
//! the library must be released with [`km_string_free`], jobs with
//! [`km_job_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kmseries::cli;
use kmseries::io::Job;
use kmseries::Error;

/// Status codes; the first four agree with the CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KmStatus {
    Ok = 0,
    CheckFailed = 1,
    InvalidInput = 2,
    Budget = 3,
    NullPointer = 4,
    Panic = 5,
}

/// Opaque parsed job.
pub struct KmJob {
    job: Job,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(s).expect("nul bytes removed")));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> KmStatus {
    match e {
        Error::Budget { .. } => KmStatus::Budget,
        _ => KmStatus::InvalidInput,
    }
}

/// Runs `f`, converting errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<KmStatus, (KmStatus, String)>) -> KmStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            KmStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (KmStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (KmStatus, String) {
    (KmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (KmStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (KmStatus::InvalidInput, format!("{what} is not UTF-8")))
}

unsafe fn job_ref<'a>(job: *const KmJob) -> Result<&'a Job, (KmStatus, String)> {
    job.as_ref().map(|j| &j.job).ok_or_else(|| null("job"))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), (KmStatus, String)> {
    let c = CString::new(s).map_err(|_| (KmStatus::InvalidInput, "output contains a nul byte".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn km_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn km_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses a JSON job. On success `*out` owns a new job.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn km_job_from_json(json: *const c_char, out: *mut *mut KmJob) -> KmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let job = Job::from_json_str(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(KmJob { job }));
        Ok(KmStatus::Ok)
    })
}

/// Releases a job. NULL is ignored.
///
/// # Safety
/// `job` must come from [`km_job_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn km_job_free(job: *mut KmJob) {
    if !job.is_null() {
        drop(Box::from_raw(job));
    }
}

/// Dimension of the quadratic space and number of indefinite places.
///
/// # Safety
/// `job` must be a live job; `dim` and `e` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn km_job_shape(job: *const KmJob, dim: *mut usize, e: *mut usize) -> KmStatus {
    guard(|| {
        let j = job_ref(job)?;
        if dim.is_null() || e.is_null() {
            return Err(null("output"));
        }
        *dim = j.space.dim();
        *e = j.space.e();
        Ok(KmStatus::Ok)
    })
}

/// `R(x, tau)` at `place` for the job's period point and a real vector `x`
/// of length `len` in the embedded coordinates.
///
/// # Safety
/// `job` must be a live job, `x` must point to `len` doubles, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn km_majorant_r(job: *const KmJob, place: usize, x: *const f64, len: usize, out: *mut f64) -> KmStatus {
    guard(|| {
        let j = job_ref(job)?;
        if x.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        if len != j.space.dim() {
            return Err(lib_err(Error::DimensionMismatch { expected: j.space.dim(), got: len }));
        }
        let tau = j.period_point().map_err(lib_err)?;
        if place == 0 || place > tau.points().len() {
            return Err((KmStatus::InvalidInput, format!("place {place} is not an indefinite place")));
        }
        let v = nalgebra::DVector::from_column_slice(std::slice::from_raw_parts(x, len));
        *out = tau.at(place).majorant_r(&v);
        Ok(KmStatus::Ok)
    })
}

/// `f(t) = E_1(t)` for `t > 0`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn km_exp_integral_f(t: f64, out: *mut f64) -> KmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = kmseries::greens::exp_integral_f(t).map_err(lib_err)?;
        Ok(KmStatus::Ok)
    })
}

/// Theta coefficients as CSV, the same text as `kmseries theta`.
///
/// # Safety
/// `job` must be a live job and `out` a valid pointer; free `*out` with
/// [`km_string_free`].
#[no_mangle]
pub unsafe extern "C" fn km_theta_csv(job: *const KmJob, radius: f64, epsilon: f64, out: *mut *mut c_char) -> KmStatus {
    guard(|| {
        let j = job_ref(job)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if !(radius > 0.0 && epsilon > 0.0) {
            return Err((KmStatus::InvalidInput, "radius and epsilon must be positive".into()));
        }
        put_string(out, cli::theta_csv(j, radius, epsilon).map_err(lib_err)?)?;
        Ok(KmStatus::Ok)
    })
}

/// Runs the check suite and writes its JSON report to `*out`. Returns
/// `CheckFailed` (with the report still written) when a check fails.
///
/// # Safety
/// As for [`km_theta_csv`].
#[no_mangle]
pub unsafe extern "C" fn km_check_json(job: *const KmJob, seed: u64, out: *mut *mut c_char) -> KmStatus {
    guard(|| {
        let j = job_ref(job)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let records = cli::check_suite(j, seed, 1, 10, 1e-10).map_err(lib_err)?;
        let pass = records.iter().all(|r| r.pass);
        let doc = serde_json::json!({ "pass": pass, "checks": records });
        put_string(out, doc.to_string())?;
        if pass {
            Ok(KmStatus::Ok)
        } else {
            set_error("one or more checks failed");
            Ok(KmStatus::CheckFailed)
        }
    })
}

/// Releases a string returned by the library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn km_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
