//! C interface to `cgle_rpo`.
//!
//! States are opaque `RpoState` handles created by `rpo_plane_wave` or
//! `rpo_read` and released with `rpo_free`. Every fallible call returns an
//! `RpoStatus`; the message of the most recent failure on the calling
//! thread is available from `rpo_last_error`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use cgle_rpo::continuation::{self, ContinuationConfig, PathStatus};
use cgle_rpo::dynamics::{closure_residual, plane_wave, relative_monodromy};
use cgle_rpo::gmres::GmresConfig;
use cgle_rpo::io::{read_solution_file, write_solution_file};
use cgle_rpo::newton::{newton_solve, NewtonConfig};
use cgle_rpo::spectral::Grid;
use cgle_rpo::system::{residual_norm, ParamName, Parameters, StatePoint};
use cgle_rpo::Error;

/// Opaque solution handle.
pub struct RpoState {
    inner: StatePoint,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    NoConvergence = 4,
    Stall = 5,
    Io = 6,
    Internal = 7,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut bytes = msg.into().into_bytes();
    bytes.retain(|&b| b != 0);
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(bytes).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> RpoStatus {
    match e {
        Error::Parse { .. } => RpoStatus::Parse,
        Error::Io(_) | Error::Csv(_) => RpoStatus::Io,
        Error::LinearSolve(_) | Error::BlowUp { .. } => RpoStatus::Internal,
        _ => RpoStatus::InvalidArgument,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (RpoStatus, String)>) -> RpoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RpoStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RpoStatus::Internal
        }
    }
}

fn lift<T>(r: cgle_rpo::Result<T>) -> Result<T, (RpoStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null() -> (RpoStatus, String) {
    (RpoStatus::NullPointer, "null pointer argument".into())
}

unsafe fn state_ref<'a>(p: *const RpoState) -> Result<&'a RpoState, (RpoStatus, String)> {
    p.as_ref().ok_or_else(null)
}

unsafe fn string_arg(p: *const c_char) -> Result<String, (RpoStatus, String)> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| (RpoStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

unsafe fn emit<T>(out: *mut T, v: T) -> Result<(), (RpoStatus, String)> {
    if out.is_null() {
        return Err(null());
    }
    out.write(v);
    Ok(())
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn rpo_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Exact plane-wave solution with wavenumber `k` on an `nx` x `nt` grid.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rpo_plane_wave(
    nx: usize,
    nt: usize,
    k: i32,
    r: f64,
    nu: f64,
    mu: f64,
    period: f64,
    shift: f64,
    out: *mut *mut RpoState,
) -> RpoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        let grid = lift(Grid::new(nx, nt))?;
        let s = lift(plane_wave(grid, k, Parameters::new(r, nu, mu), period, shift))?;
        emit(out, Box::into_raw(Box::new(RpoState { inner: s })))
    })
}

/// Load a solution file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rpo_read(path: *const c_char, out: *mut *mut RpoState) -> RpoStatus {
    guard(|| {
        let path = string_arg(path)?;
        if out.is_null() {
            return Err(null());
        }
        let s = lift(read_solution_file(path))?;
        emit(out, Box::into_raw(Box::new(RpoState { inner: s })))
    })
}

/// Write a solution file.
///
/// # Safety
/// `state` must come from this library and `path` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn rpo_write(state: *const RpoState, path: *const c_char) -> RpoStatus {
    guard(|| {
        let s = state_ref(state)?;
        let path = string_arg(path)?;
        lift(write_solution_file(path, &s.inner))
    })
}

/// Release a handle. Null is ignored.
///
/// # Safety
/// `state` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rpo_free(state: *mut RpoState) {
    if !state.is_null() {
        drop(Box::from_raw(state));
    }
}

/// # Safety
/// `state` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpo_residual_norm(state: *const RpoState, out: *mut f64) -> RpoStatus {
    guard(|| {
        let s = state_ref(state)?;
        emit(out, lift(residual_norm(&s.inner))?)
    })
}

/// Newton-refine in place. Non-positive `newton_tol` or zero `max_iter`
/// select the defaults. On `RPO_STATUS_NO_CONVERGENCE` the handle is left
/// unchanged. `iterations` may be null.
///
/// # Safety
/// `state` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn rpo_refine(state: *mut RpoState, newton_tol: f64, max_iter: usize, iterations: *mut usize) -> RpoStatus {
    guard(|| {
        let s = state.as_mut().ok_or_else(null)?;
        let mut ncfg = NewtonConfig::default();
        if newton_tol > 0.0 {
            ncfg.f_tol = newton_tol;
        }
        if max_iter > 0 {
            ncfg.max_iter = max_iter;
        }
        let run = lift(newton_solve(&s.inner, &ncfg, &GmresConfig::default()))?;
        if !iterations.is_null() {
            iterations.write(run.iterations());
        }
        if !run.converged {
            let summary = format!("residual {:e} after {} iterations", run.residual_norm(), run.iterations());
            return Err((RpoStatus::NoConvergence, run.failure.unwrap_or(summary)));
        }
        s.inner = run.state;
        Ok(())
    })
}

/// Group shift `(phi, S, T)` into `out[0..3]`.
///
/// # Safety
/// `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rpo_group_shift(state: *const RpoState, out: *mut f64) -> RpoStatus {
    guard(|| {
        let h = state_ref(state)?.inner.shift;
        if out.is_null() {
            return Err(null());
        }
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[h.phi, h.s, h.t]);
        Ok(())
    })
}

/// Parameters `(R, nu, mu)` into `out[0..3]`.
///
/// # Safety
/// `out` must point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rpo_parameters(state: *const RpoState, out: *mut f64) -> RpoStatus {
    guard(|| {
        let p = state_ref(state)?.inner.params;
        if out.is_null() {
            return Err(null());
        }
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[p.r, p.nu, p.mu]);
        Ok(())
    })
}

/// Number of real unknowns of the Newton system, or 0 for a null handle.
///
/// # Safety
/// `state` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn rpo_unknown_count(state: *const RpoState) -> usize {
    state.as_ref().map_or(0, |s| s.inner.grid().unknown_count())
}

/// Closure residual of direct integration over one period with `steps`
/// steps (0 selects the default).
///
/// # Safety
/// `state` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpo_closure_residual(state: *const RpoState, steps: usize, out: *mut f64) -> RpoStatus {
    guard(|| {
        let s = state_ref(state)?;
        let steps = if steps == 0 { cgle_rpo::dynamics::DEFAULT_STEPS } else { steps };
        emit(out, lift(closure_residual(&s.inner, steps))?)
    })
}

/// Count of relative monodromy eigenvalues outside the unit circle.
///
/// # Safety
/// `state` must come from this library and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rpo_unstable_dimension(state: *const RpoState, steps: usize, out: *mut usize) -> RpoStatus {
    guard(|| {
        let s = state_ref(state)?;
        let steps = if steps == 0 { cgle_rpo::dynamics::DEFAULT_STEPS } else { steps };
        emit(out, lift(relative_monodromy(&s.inner, steps))?.unstable_dimension)
    })
}

/// Arclength continuation of `param` (`"R"`, `"nu"` or `"mu"`) to `target`
/// with default step control. The handle is replaced by the last accepted
/// point, including when the path stalls (`RPO_STATUS_STALL`). `steps` may
/// be null.
///
/// # Safety
/// `state` must come from this library and `param` must be nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn rpo_continue(state: *mut RpoState, param: *const c_char, target: f64, steps: *mut usize) -> RpoStatus {
    guard(|| {
        let s = state.as_mut().ok_or_else(null)?;
        let param: ParamName = lift(string_arg(param)?.parse())?;
        let cfg = ContinuationConfig::new(param, target);
        let rec = lift(continuation::run(&s.inner, &cfg, &NewtonConfig::default(), &GmresConfig::default(), |_| Ok(())))?;
        if !steps.is_null() {
            steps.write(rec.points.len());
        }
        s.inner = rec.last_state().clone();
        match rec.status {
            PathStatus::ReachedTarget => Ok(()),
            status => Err((RpoStatus::Stall, rec.diagnostics.unwrap_or_else(|| format!("{status:?}")))),
        }
    })
}
