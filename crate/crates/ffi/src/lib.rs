//! C ABI over the `topopriv` library.
//!
//! Objects cross the boundary as opaque handles (`TpTopology`,
//! `TpFeedback`) created by `tp_*_new`/`tp_design_*` and released by the
//! matching `*_free`. Every fallible call returns a [`TpStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`tp_last_error_message`]. Matrices are dense, row-major `double`
//! buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use topopriv::adversary::{ols_estimate, scaled_offdiagonal_error};
use topopriv::design::protocol::{run_protocol, ProtocolConfig};
use topopriv::design::{
    design_invariant_subspace, design_kernel_pb, design_laplacian, design_unobservable,
    FeedbackMatrix,
};
use topopriv::dynamics::{simulate, Trajectory};
use topopriv::graph::{random_topology, Topology};
use topopriv::linalg::{DenseMatrix, Vector};
use topopriv::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad input or configuration.
    InvalidArgument = 2,
    /// The requested design does not exist for this network.
    Infeasible = 3,
    NumericalFailure = 4,
    /// Output buffer length does not match the result.
    BufferSize = 5,
    Panic = 6,
}

/// Opaque network handle.
pub struct TpTopology {
    inner: Topology,
}

/// Opaque feedback-matrix handle.
pub struct TpFeedback {
    inner: FeedbackMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> TpStatus {
    match e.exit_code() {
        3 => TpStatus::Infeasible,
        4 => TpStatus::NumericalFailure,
        _ => TpStatus::InvalidArgument,
    }
}

fn fail(status: TpStatus, msg: impl Into<String>) -> TpStatus {
    set_last_error(msg.into());
    status
}

/// Runs `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), TpStatus>) -> TpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TpStatus::Ok,
        Ok(Err(status)) => status,
        Err(_) => fail(TpStatus::Panic, "panic inside topopriv"),
    }
}

fn lib<T>(r: topopriv::Result<T>) -> Result<T, TpStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn slice<'a>(p: *const f64, len: usize) -> Result<&'a [f64], TpStatus> {
    if p.is_null() {
        return Err(fail(TpStatus::NullPointer, "null input buffer"));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], TpStatus> {
    if p.is_null() {
        return Err(fail(TpStatus::NullPointer, "null output buffer"));
    }
    if len != needed {
        return Err(fail(TpStatus::BufferSize, format!("buffer holds {len} values, need {needed}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, TpStatus> {
    p.as_ref().ok_or_else(|| fail(TpStatus::NullPointer, "null handle"))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), TpStatus> {
    if out.is_null() {
        return Err(fail(TpStatus::NullPointer, "null output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn write_row_major(m: &DenseMatrix, out: &mut [f64]) {
    let c = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..c {
            out[i * c + j] = m[(i, j)];
        }
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a network from an `n x n` row-stochastic weight matrix.
///
/// # Safety
/// `weights` must point to `n * n` doubles and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_topology_new(
    weights: *const f64,
    n: usize,
    out: *mut *mut TpTopology,
) -> TpStatus {
    guard(|| {
        let w = slice(weights, n * n)?;
        let t = lib(Topology::validate(DenseMatrix::from_row_slice(n, n, w)))?;
        put(out, TpTopology { inner: t })
    })
}

/// Seeded random strongly connected, aperiodic network.
///
/// # Safety
/// `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_topology_random(
    n: usize,
    density: f64,
    seed: u64,
    out: *mut *mut TpTopology,
) -> TpStatus {
    guard(|| {
        let t = lib(random_topology(n, density, seed))?;
        put(out, TpTopology { inner: t })
    })
}

/// # Safety
/// `t` must be NULL or a handle from `tp_topology_new`/`tp_topology_random`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn tp_topology_free(t: *mut TpTopology) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Node count, 0 for NULL.
///
/// # Safety
/// `t` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_topology_n(t: *const TpTopology) -> usize {
    t.as_ref().map_or(0, |t| t.inner.n())
}

/// Stationary distribution `pi` (`pi^T W = pi^T`, `sum pi = 1`).
///
/// # Safety
/// `t` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tp_topology_stationary(
    t: *const TpTopology,
    out: *mut f64,
    len: usize,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let pi = lib(t.inner.stationary())?;
        slice_mut(out, len, pi.len())?.copy_from_slice(pi.as_slice());
        Ok(())
    })
}

/// `K = -alpha (I - W)`; pass a NaN `alpha` for the default step.
///
/// # Safety
/// `t` must be a live handle and `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_design_laplacian(
    t: *const TpTopology,
    alpha: f64,
    out: *mut *mut TpFeedback,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let alpha = (!alpha.is_nan()).then_some(alpha);
        let fb = lib(design_laplacian(&t.inner, alpha))?;
        put(out, TpFeedback { inner: fb })
    })
}

/// Kernel-space design (`K 1 = 0`, `pi^T K = 0` on the support of `W`).
///
/// # Safety
/// `t` must be a live handle and `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_design_kernel_pb(
    t: *const TpTopology,
    seed: u64,
    out: *mut *mut TpFeedback,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let fb = lib(design_kernel_pb(&t.inner, seed))?;
        put(out, TpFeedback { inner: fb })
    })
}

/// Design making `(W + K, C)` unobservable; `c` is `m x n` row-major.
///
/// # Safety
/// `t` must be a live handle, `c` must point to `m * n` doubles and `out`
/// to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_design_unobservable(
    t: *const TpTopology,
    c: *const f64,
    m: usize,
    seed: u64,
    out: *mut *mut TpFeedback,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let n = t.inner.n();
        let c = DenseMatrix::from_row_slice(m, n, slice(c, m * n)?);
        let fb = lib(design_unobservable(&t.inner, &c, seed))?;
        put(out, TpFeedback { inner: fb })
    })
}

/// Eigenmode-removal design.
///
/// # Safety
/// `t` must be a live handle and `out` must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_design_invariant_subspace(
    t: *const TpTopology,
    out: *mut *mut TpFeedback,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let fb = lib(design_invariant_subspace(&t.inner))?;
        put(out, TpFeedback { inner: fb })
    })
}

/// Distributed budgeted protocol with per-row budget `tau`; `x0` holds `n`
/// initial states and `seed` drives the beacon draws.
///
/// # Safety
/// `t` must be a live handle, `x0` must point to `n` doubles and `out` to
/// writable storage.
#[no_mangle]
pub unsafe extern "C" fn tp_design_distributed(
    t: *const TpTopology,
    x0: *const f64,
    tau: f64,
    seed: u64,
    out: *mut *mut TpFeedback,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let x0 = Vector::from_column_slice(slice(x0, t.inner.n())?);
        let outcome = lib(run_protocol(&t.inner, &x0, &ProtocolConfig::new(tau, seed)))?;
        let fb = lib(outcome.feedback(&t.inner))?;
        put(out, TpFeedback { inner: fb })
    })
}

/// # Safety
/// `fb` must be NULL or a live feedback handle.
#[no_mangle]
pub unsafe extern "C" fn tp_feedback_free(fb: *mut TpFeedback) {
    if !fb.is_null() {
        drop(Box::from_raw(fb));
    }
}

/// Copies `K` (`n x n`, row-major).
///
/// # Safety
/// `fb` must be a live handle and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tp_feedback_matrix(
    fb: *const TpFeedback,
    out: *mut f64,
    len: usize,
) -> TpStatus {
    guard(|| {
        let fb = handle(fb)?;
        let n = fb.inner.n();
        write_row_major(&fb.inner.k, slice_mut(out, len, n * n)?);
        Ok(())
    })
}

/// 1 when every convergence condition holds for `W + K`, 0 otherwise or
/// for NULL.
///
/// # Safety
/// `fb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_feedback_verified(fb: *const TpFeedback) -> i32 {
    fb.as_ref().map_or(0, |f| f.inner.verification.all_ok() as i32)
}

/// Feedback as JSON; release with [`tp_string_free`]. NULL on failure.
///
/// # Safety
/// `fb` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tp_feedback_to_json(fb: *const TpFeedback) -> *mut c_char {
    let mut result = ptr::null_mut();
    guard(|| {
        let fb = handle(fb)?;
        let s = CString::new(fb.inner.to_json()).map_err(|_| fail(TpStatus::Panic, "nul in json"))?;
        result = s.into_raw();
        Ok(())
    });
    result
}

/// # Safety
/// `s` must be NULL or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn tp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates `x_{t+1} = (W + K) x_t` (`K` may be NULL) and writes
/// `x_0..x_T` as `(horizon + 1) x n` row-major.
///
/// # Safety
/// `t` must be a live handle, `fb` NULL or live, `x0` must point to `n`
/// doubles and `out` to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tp_simulate(
    t: *const TpTopology,
    fb: *const TpFeedback,
    x0: *const f64,
    horizon: usize,
    out: *mut f64,
    len: usize,
) -> TpStatus {
    guard(|| {
        let t = handle(t)?;
        let n = t.inner.n();
        let w_eff = match fb.as_ref() {
            Some(f) => f.inner.effective(&t.inner),
            None => t.inner.weights().clone(),
        };
        let x0 = Vector::from_column_slice(slice(x0, n)?);
        let traj = lib(simulate(&w_eff, &x0, horizon))?;
        let out = slice_mut(out, len, (horizon + 1) * n)?;
        for (k, x) in traj.states.iter().enumerate() {
            out[k * n..(k + 1) * n].copy_from_slice(x.as_slice());
        }
        Ok(())
    })
}

/// Least-squares estimate of the interaction matrix from `count` states
/// (`count x n` row-major, consecutive in time), written `n x n`
/// row-major.
///
/// # Safety
/// `states` must point to `count * n` doubles and `out` to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tp_ols_estimate(
    states: *const f64,
    n: usize,
    count: usize,
    out: *mut f64,
    len: usize,
) -> TpStatus {
    guard(|| {
        if n == 0 || count < 2 {
            return Err(fail(TpStatus::InvalidArgument, "need n >= 1 and at least two states"));
        }
        let data = slice(states, count * n)?;
        let traj = Trajectory {
            states: (0..count).map(|k| Vector::from_column_slice(&data[k * n..(k + 1) * n])).collect(),
        };
        let est = lib(ols_estimate(&traj))?;
        write_row_major(&est.estimate, slice_mut(out, len, n * n)?);
        Ok(())
    })
}

/// Normalised errors of an estimate against the truth (both `n x n`
/// row-major): `er1` over all entries, `er2` over off-diagonal entries
/// after the best positive rescaling `gamma`.
///
/// # Safety
/// `estimate` and `truth` must point to `n * n` doubles; the result
/// pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tp_inference_errors(
    estimate: *const f64,
    truth: *const f64,
    n: usize,
    er1: *mut f64,
    er2: *mut f64,
    gamma: *mut f64,
) -> TpStatus {
    guard(|| {
        let est = DenseMatrix::from_row_slice(n, n, slice(estimate, n * n)?);
        let tru = DenseMatrix::from_row_slice(n, n, slice(truth, n * n)?);
        if er1.is_null() || er2.is_null() || gamma.is_null() {
            return Err(fail(TpStatus::NullPointer, "null result pointer"));
        }
        let (e2, g) = scaled_offdiagonal_error(&est, &tru);
        *er1 = (&est - &tru).norm() / tru.norm();
        *er2 = e2;
        *gamma = g;
        Ok(())
    })
}
