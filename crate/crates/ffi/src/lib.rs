//! C interface to the simulator.
//!
//! Every function returns an [`FslStatus`]. On failure the message is kept in
//! thread-local storage and can be read with [`fsl_last_error_message`].
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use fedsuplinucb::metrics::write_csv;
use fedsuplinucb::orchestrator::{execute, Execution, RunOptions, RunRequest};
use fedsuplinucb::{Error, RidgeStats};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    InvalidConfig = 4,
    Environment = 5,
    Io = 6,
    Parse = 7,
    Panic = 8,
}

/// Ridge statistics `(A, b)` with cached inverse and log-determinant.
pub struct FslRidge(RidgeStats);

/// A finished simulation run.
pub struct FslSimulation(Execution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> FslStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::InvalidDimension(_) => {
            FslStatus::DimensionMismatch
        }
        Error::InvalidConfig { .. } => FslStatus::InvalidConfig,
        Error::Environment(_) | Error::BudgetExceeded { .. } => FslStatus::Environment,
        Error::Io { .. } => FslStatus::Io,
        Error::Parse { .. } | Error::Schema { .. } | Error::Decode(_) => FslStatus::Parse,
        Error::NumericInput(_) | Error::LayerOutOfRange { .. } | Error::InvalidArgument(_) => {
            FslStatus::InvalidArgument
        }
    }
}

fn fail(status: FslStatus, msg: impl Into<String>) -> FslStatus {
    set_error(msg);
    status
}

fn guard<F: FnOnce() -> Result<(), FslStatus>>(f: F) -> FslStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FslStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(FslStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: fedsuplinucb::Result<T>) -> Result<T, FslStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn slice<'a>(ptr: *const f64, len: usize) -> Result<&'a [f64], FslStatus> {
    if ptr.is_null() {
        return Err(fail(FslStatus::NullPointer, "null vector"));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn string<'a>(ptr: *const c_char) -> Result<&'a str, FslStatus> {
    if ptr.is_null() {
        return Err(fail(FslStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(FslStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn deref<'a, T>(ptr: *const T) -> Result<&'a T, FslStatus> {
    ptr.as_ref()
        .ok_or_else(|| fail(FslStatus::NullPointer, "null handle"))
}

unsafe fn out<'a, T>(ptr: *mut T) -> Result<&'a mut T, FslStatus> {
    ptr.as_mut()
        .ok_or_else(|| fail(FslStatus::NullPointer, "null output pointer"))
}

/// Message of the last failure on this thread. Valid until the next failing
/// call on the same thread; empty if nothing failed yet.
#[no_mangle]
pub extern "C" fn fsl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates `λI` statistics of dimension `dim`.
///
/// # Safety
/// `out_handle` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn fsl_ridge_new(
    dim: usize,
    lambda: f64,
    out_handle: *mut *mut FslRidge,
) -> FslStatus {
    guard(|| {
        let slot = out(out_handle)?;
        let stats = lift(RidgeStats::with_lambda(dim, lambda))?;
        *slot = Box::into_raw(Box::new(FslRidge(stats)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`fsl_ridge_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsl_ridge_free(handle: *mut FslRidge) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Adds `w·xxᵀ` to `A` and `w·r·x` to `b`.
///
/// # Safety
/// `x` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn fsl_ridge_update(
    handle: *mut FslRidge,
    x: *const f64,
    len: usize,
    reward: f64,
    weight: f64,
) -> FslStatus {
    guard(|| {
        let h = out(handle)?;
        let x = slice(x, len)?;
        lift(h.0.update(x, reward, weight))
    })
}

/// Writes `‖x‖_{A⁻¹}` to `out_norm`.
///
/// # Safety
/// `x` must point to `len` readable doubles and `out_norm` be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_ridge_weighted_norm(
    handle: *const FslRidge,
    x: *const f64,
    len: usize,
    out_norm: *mut f64,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        let x = slice(x, len)?;
        let slot = out(out_norm)?;
        *slot = lift(h.0.weighted_norm(x))?;
        Ok(())
    })
}

/// # Safety
/// `out_value` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_ridge_log_det(
    handle: *const FslRidge,
    out_value: *mut f64,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        *out(out_value)? = h.0.log_det();
        Ok(())
    })
}

/// Writes `θ̂ = A⁻¹b` into `out_theta`, which must hold exactly `dim` values.
///
/// # Safety
/// `out_theta` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn fsl_ridge_theta(
    handle: *const FslRidge,
    out_theta: *mut f64,
    len: usize,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        if out_theta.is_null() {
            return Err(fail(FslStatus::NullPointer, "null vector"));
        }
        if len != h.0.dim() {
            return Err(fail(
                FslStatus::DimensionMismatch,
                format!("dimension mismatch: expected {}, got {len}", h.0.dim()),
            ));
        }
        let theta = h.0.theta();
        std::slice::from_raw_parts_mut(out_theta, len).copy_from_slice(theta.as_slice());
        Ok(())
    })
}

/// Runs the simulation described by a JSON run request, the same object the
/// CLI echoes in its summaries.
///
/// # Safety
/// `request_json` must be a NUL-terminated string and `out_handle` writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_simulation_run(
    request_json: *const c_char,
    out_handle: *mut *mut FslSimulation,
) -> FslStatus {
    guard(|| {
        let slot = out(out_handle)?;
        *slot = ptr::null_mut();
        let text = string(request_json)?;
        let req: RunRequest = serde_json::from_str(text)
            .map_err(|e| fail(FslStatus::Parse, format!("run request: {e}")))?;
        let ex = lift(execute(&req, &RunOptions::default()))?;
        *slot = Box::into_raw(Box::new(FslSimulation(ex)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from [`fsl_simulation_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn fsl_simulation_free(handle: *mut FslSimulation) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Number of arm pulls in the run.
///
/// # Safety
/// `out_pulls` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_simulation_pulls(
    handle: *const FslSimulation,
    out_pulls: *mut u64,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        *out(out_pulls)? = h.0.log.records.len() as u64;
        Ok(())
    })
}

/// # Safety
/// `out_regret` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_simulation_final_regret(
    handle: *const FslSimulation,
    out_regret: *mut f64,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        *out(out_regret)? = h.0.log.final_regret();
        Ok(())
    })
}

/// Synchronization batches and client exchanges.
///
/// # Safety
/// Both output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_simulation_comm(
    handle: *const FslSimulation,
    out_batches: *mut u64,
    out_exchanges: *mut u64,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        let b = out(out_batches)?;
        let e = out(out_exchanges)?;
        *b = h.0.log.comm_batches();
        *e = h.0.log.comm_exchanges();
        Ok(())
    })
}

/// Writes the per-pull CSV log.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fsl_simulation_write_csv(
    handle: *const FslSimulation,
    path: *const c_char,
) -> FslStatus {
    guard(|| {
        let h = deref(handle)?;
        let path = string(path)?;
        lift(write_csv(&h.0.log, Path::new(path)))
    })
}
