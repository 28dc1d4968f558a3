//! C ABI over the orbitlab library.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `_free` function. Every fallible call returns
//! an [`OrbitlabStatus`]; on failure the message is kept per thread and can
//! be read with [`orbitlab_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use orbitlab::cli::{self, ParsedSymbol};
use orbitlab::error::LabError;
use orbitlab::num_core::{c, ComplexVector};
use orbitlab::orbit_lab::{iterate_orbit, taylor_norms, CoanalyticToeplitz, OrbitProfile};
use orbitlab::symbols::SymbolSeries;
use orbitlab::toeplitz_ops::Tridiag;

/// Result codes shared by every function that can fail.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrbitlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Parse = 3,
    Hypothesis = 4,
    Numerical = 5,
    Io = 6,
    OutOfRange = 7,
    Panic = 8,
}

/// A parsed symbol: analytic series or tridiagonal triple.
pub struct OrbitlabSymbol {
    inner: ParsedSymbol,
}

/// Norms ‖Tⁿx‖ for n = 0..=horizon.
pub struct OrbitlabProfile {
    inner: OrbitProfile,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(s));
}

fn status_of(e: &LabError) -> OrbitlabStatus {
    match e {
        LabError::Parse { .. } => OrbitlabStatus::Parse,
        LabError::Io(_) => OrbitlabStatus::Io,
        LabError::InvalidInput(_) | LabError::DimensionMismatch { .. } => OrbitlabStatus::InvalidInput,
        e if e.is_hypothesis() => OrbitlabStatus::Hypothesis,
        _ => OrbitlabStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (OrbitlabStatus, String)>) -> OrbitlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OrbitlabStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside orbitlab");
            OrbitlabStatus::Panic
        }
    }
}

fn lab(e: LabError) -> (OrbitlabStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (OrbitlabStatus, String) {
    (OrbitlabStatus::NullPointer, format!("{what} is null"))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (OrbitlabStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (OrbitlabStatus::InvalidInput, format!("{what} is not UTF-8")))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn orbitlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn orbitlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses a symbol in the command-line grammar (`poly:2,1`, `tridiag:1,0,0.25`,
/// `builtin:cs-halfplane`, ...).
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_symbol_parse(text: *const c_char, out: *mut *mut OrbitlabSymbol) -> OrbitlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let t = c_str(text, "text")?;
        let inner = cli::parse_symbol(t).map_err(lab)?;
        *out = Box::into_raw(Box::new(OrbitlabSymbol { inner }));
        Ok(())
    })
}

/// Builds an analytic polynomial symbol from real and imaginary coefficient arrays.
///
/// # Safety
/// `re` and `im` must point to `len` doubles; `im` may be null for real coefficients.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_symbol_from_coeffs(
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut OrbitlabSymbol,
) -> OrbitlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if re.is_null() {
            return Err(null("re"));
        }
        let re = std::slice::from_raw_parts(re, len);
        let coeffs = (0..len).map(|j| c(re[j], if im.is_null() { 0.0 } else { *im.add(j) })).collect();
        let s = SymbolSeries::polynomial(coeffs, "ffi").map_err(lab)?;
        *out = Box::into_raw(Box::new(OrbitlabSymbol { inner: ParsedSymbol::Series(s) }));
        Ok(())
    })
}

/// Evaluates the symbol at z = re + i·im.
///
/// # Safety
/// `sym` must come from this library; output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_symbol_eval(
    sym: *const OrbitlabSymbol,
    re: f64,
    im: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> OrbitlabStatus {
    guard(|| {
        let s = sym.as_ref().ok_or_else(|| null("sym"))?;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let z = c(re, im);
        let v = match &s.inner {
            ParsedSymbol::Series(g) => g.eval(z),
            ParsedSymbol::Tridiagonal(t) => {
                if z.norm() == 0.0 {
                    return Err((OrbitlabStatus::InvalidInput, "tridiagonal symbol has a pole at 0".into()));
                }
                t.eval(z)
            }
        };
        *out_re = v.re;
        *out_im = v.im;
        Ok(())
    })
}

/// 1 for an analytic series, 0 for a tridiagonal triple, -1 for null.
///
/// # Safety
/// `sym` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_symbol_is_analytic(sym: *const OrbitlabSymbol) -> c_int {
    match sym.as_ref().map(|s| &s.inner) {
        Some(ParsedSymbol::Series(_)) => 1,
        Some(ParsedSymbol::Tridiagonal(Tridiag { .. })) => 0,
        None => -1,
    }
}

/// # Safety
/// `sym` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_symbol_free(sym: *mut OrbitlabSymbol) {
    if !sym.is_null() {
        drop(Box::from_raw(sym));
    }
}

/// Orbit of the coanalytic Toeplitz operator T_g* on the first `len` Taylor
/// coefficients, starting from x = x_re + i·x_im.
///
/// # Safety
/// `sym` must come from this library; `x_re` must point to `len` doubles and
/// `x_im` to `len` doubles or be null.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_orbit_coanalytic(
    sym: *const OrbitlabSymbol,
    x_re: *const f64,
    x_im: *const f64,
    len: usize,
    horizon: usize,
    out: *mut *mut OrbitlabProfile,
) -> OrbitlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let s = sym.as_ref().ok_or_else(|| null("sym"))?;
        if x_re.is_null() {
            return Err(null("x_re"));
        }
        let g = s.inner.clone().series().map_err(lab)?;
        let re = std::slice::from_raw_parts(x_re, len);
        let entries = (0..len).map(|j| c(re[j], if x_im.is_null() { 0.0 } else { *x_im.add(j) })).collect();
        let x = ComplexVector::new(entries).map_err(lab)?;
        let op = CoanalyticToeplitz::new(&g, len).map_err(lab)?;
        let inner = iterate_orbit(&op, &x, horizon).map_err(lab)?;
        *out = Box::into_raw(Box::new(OrbitlabProfile { inner }));
        Ok(())
    })
}

/// Number of stored norms (horizon + 1), or 0 for null.
///
/// # Safety
/// `p` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_profile_len(p: *const OrbitlabProfile) -> usize {
    p.as_ref().map_or(0, |p| p.inner.norms.len())
}

/// Writes ‖Tⁿx‖ to `out`.
///
/// # Safety
/// `p` must come from this library and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_profile_norm(p: *const OrbitlabProfile, n: usize, out: *mut f64) -> OrbitlabStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("profile"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let v = p.inner.norms.get(n).ok_or((OrbitlabStatus::OutOfRange, format!("index {n} beyond horizon")))?;
        *out = *v;
        Ok(())
    })
}

/// # Safety
/// `p` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_profile_free(p: *mut OrbitlabProfile) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Taylor-coefficient ℓ² norm of (1−z)^k (1+c−cz)^{−n}.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_taylor_norm(k: u32, c_par: f64, n: usize, out: *mut f64) -> OrbitlabStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let t = taylor_norms(k, c_par, n.max(1)).map_err(lab)?;
        let row = t.rows.iter().find(|r| r.n == n).ok_or((OrbitlabStatus::OutOfRange, format!("no row for n = {n}")))?;
        *out = row.norm;
        Ok(())
    })
}

/// Runs one command line (arguments after the program name) and returns the
/// JSON report in `out_json`, to be released with [`orbitlab_string_free`].
/// `exit_code` receives the code the binary would exit with.
///
/// # Safety
/// `argv` must point to `argc` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_run(
    argv: *const *const c_char,
    argc: usize,
    out_json: *mut *mut c_char,
    exit_code: *mut c_int,
) -> OrbitlabStatus {
    guard(|| {
        if out_json.is_null() || exit_code.is_null() {
            return Err(null("output"));
        }
        *out_json = ptr::null_mut();
        if argv.is_null() && argc > 0 {
            return Err(null("argv"));
        }
        let mut args = vec!["orbitlab".to_string()];
        for j in 0..argc {
            args.push(c_str(*argv.add(j), "argument")?.to_string());
        }
        let parsed = cli::parse_args(&args).map_err(|e| (OrbitlabStatus::Parse, e))?;
        let report = cli::run(&parsed);
        *exit_code = report.exit_code();
        *out_json = CString::new(report.to_json()).map_err(|_| (OrbitlabStatus::Numerical, "report contains NUL".into()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn orbitlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
