//! C ABI over emproc-core.
//!
//! Models and weights are opaque handles built from TOML snippets (the
//! `[model]` and `[weights]` blocks of an experiment config, without the
//! header). Every function returns an [`EmprocStatus`]; on failure the
//! message is available from [`emproc_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use emproc_core::empirical::{beta_n, PathSample};
use emproc_core::model::{ModelSpec, TimeGrid, WeightSpec};
use emproc_core::oracle::Oracle;
use emproc_core::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmprocStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Invalid model, weights or arguments.
    Config = 3,
    /// Argument outside the domain of the operation.
    Domain = 4,
    /// Tied values in a sample column.
    Tie = 5,
    /// Quadrature failure or violated invariant.
    Numerical = 6,
    Panic = 7,
}

/// Opaque model handle; owns the oracle for the model.
pub struct EmprocModel {
    oracle: Oracle,
}

/// Opaque weight-family handle.
pub struct EmprocWeights {
    spec: WeightSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> EmprocStatus {
    match e {
        Error::Config(_) | Error::Io { .. } => EmprocStatus::Config,
        Error::Domain(_) => EmprocStatus::Domain,
        Error::Tie { .. } => EmprocStatus::Tie,
        Error::Quadrature { .. } | Error::Invariant { .. } => EmprocStatus::Numerical,
    }
}

fn fail(status: EmprocStatus, message: impl Into<String>) -> EmprocStatus {
    set_error(message.into());
    status
}

/// Runs `f`, mapping errors and panics to status codes.
fn guard(f: impl FnOnce() -> Result<(), EmprocStatus>) -> EmprocStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmprocStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(EmprocStatus::Panic, "internal panic"),
    }
}

fn check<T>(r: emproc_core::Result<T>) -> Result<T, EmprocStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn text<'a>(s: *const c_char) -> Result<&'a str, EmprocStatus> {
    if s.is_null() {
        return Err(fail(EmprocStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(EmprocStatus::InvalidUtf8, "argument is not valid UTF-8"))
}

unsafe fn borrow<'a, T>(p: *const T) -> Result<&'a T, EmprocStatus> {
    p.as_ref().ok_or_else(|| fail(EmprocStatus::NullPointer, "null handle"))
}

unsafe fn write<T>(out: *mut T, value: T) -> Result<(), EmprocStatus> {
    if out.is_null() {
        return Err(fail(EmprocStatus::NullPointer, "null output pointer"));
    }
    out.write(value);
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, EmprocStatus> {
    toml::from_str(s).map_err(|e| fail(EmprocStatus::Config, e.to_string()))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emproc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emproc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a model from the body of a `[model]` block, e.g.
/// `kind = "stationary_ou"\nrho = 1.0`.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_model_new(toml: *const c_char, out: *mut *mut EmprocModel) -> EmprocStatus {
    guard(|| {
        let spec: ModelSpec = parse(text(toml)?)?;
        let oracle = check(Oracle::new(spec))?;
        write(out, Box::into_raw(Box::new(EmprocModel { oracle })))
    })
}

/// # Safety
/// `model` must come from [`emproc_model_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn emproc_model_free(model: *mut EmprocModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds a weight family from the body of a `[weights]` block, e.g.
/// `q = { kind = "constant", value = 1.0 }`.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_weights_new(toml: *const c_char, out: *mut *mut EmprocWeights) -> EmprocStatus {
    guard(|| {
        let spec: WeightSpec = parse(text(toml)?)?;
        check(spec.validate())?;
        write(out, Box::into_raw(Box::new(EmprocWeights { spec })))
    })
}

/// # Safety
/// `weights` must come from [`emproc_weights_new`] and not be used afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn emproc_weights_free(weights: *mut EmprocWeights) {
    if !weights.is_null() {
        drop(Box::from_raw(weights));
    }
}

/// G_t(x).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_marginal_cdf(model: *const EmprocModel, t: f64, x: f64, out: *mut f64) -> EmprocStatus {
    guard(|| {
        let m = borrow(model)?.oracle.model();
        check(m.check_time(t))?;
        write(out, m.marginal_cdf(t, x))
    })
}

/// G_t⁻¹(p) for p in (0, 1).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_marginal_quantile(
    model: *const EmprocModel,
    t: f64,
    p: f64,
    out: *mut f64,
) -> EmprocStatus {
    guard(|| {
        let m = borrow(model)?.oracle.model();
        check(m.check_time(t))?;
        write(out, check(m.marginal_quantile(t, p))?)
    })
}

/// P(G_t(Y(t)) ≤ u, G_s(Y(s)) ≤ v).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_joint_cdf(
    model: *const EmprocModel,
    t: f64,
    s: f64,
    u: f64,
    v: f64,
    out: *mut f64,
) -> EmprocStatus {
    guard(|| {
        let m = borrow(model)?.oracle.model();
        check(m.check_time(t))?;
        check(m.check_time(s))?;
        if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
            return Err(fail(EmprocStatus::Domain, "u and v must lie in [0, 1]"));
        }
        write(out, m.joint_cdf(t, s, u, v))
    })
}

/// β_n on a sample of `n` paths observed at `m` increasing times.
/// `values` is row-major n × m: `values[j * m + i]` = Y_j(t_i). Writes `m`
/// values to `out`.
///
/// # Safety
/// `values` must hold n·m doubles, `times` m doubles and `out` room for m doubles.
#[no_mangle]
pub unsafe extern "C" fn emproc_beta_n(
    model: *const EmprocModel,
    weights: *const EmprocWeights,
    values: *const f64,
    n: usize,
    times: *const f64,
    m: usize,
    out: *mut f64,
) -> EmprocStatus {
    guard(|| {
        let model = borrow(model)?;
        let weights = borrow(weights)?;
        if values.is_null() || times.is_null() || out.is_null() {
            return Err(fail(EmprocStatus::NullPointer, "null buffer"));
        }
        if n == 0 || m == 0 {
            return Err(fail(EmprocStatus::Config, "n and m must be positive"));
        }
        let values = std::slice::from_raw_parts(values, n * m);
        let times = std::slice::from_raw_parts(times, m).to_vec();
        let horizon = times[m - 1];
        let grid = check(TimeGrid::new(times, horizon))?;
        let columns = (0..m).map(|i| (0..n).map(|j| values[j * m + i]).collect()).collect();
        let sample = check(PathSample::from_columns(columns, grid, model.oracle.model().clone()))?;
        let evaluation = check(beta_n(&sample, &weights.spec))?;
        std::slice::from_raw_parts_mut(out, m).copy_from_slice(&evaluation.beta);
        Ok(())
    })
}

/// Limit covariance Γ₁(t, s) of β_n.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_gamma1(
    model: *const EmprocModel,
    weights: *const EmprocWeights,
    t: f64,
    s: f64,
    out: *mut f64,
) -> EmprocStatus {
    guard(|| {
        let model = borrow(model)?;
        let weights = borrow(weights)?;
        write(out, check(model.oracle.gamma1_cov(&weights.spec, t, s))?)
    })
}

/// Limit mean E β*_n(t) = ∫q dG − ∫q G dG.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emproc_mean_limit(
    model: *const EmprocModel,
    weights: *const EmprocWeights,
    t: f64,
    out: *mut f64,
) -> EmprocStatus {
    guard(|| {
        let model = borrow(model)?;
        let weights = borrow(weights)?;
        write(out, check(model.oracle.mean_limit(&weights.spec, t))?)
    })
}
