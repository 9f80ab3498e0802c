//! C ABI over `bmc`.
//!
//! Problems and recoveries are opaque heap handles that the caller frees
//! with the matching `*_free` function. Matrices cross the boundary as
//! row-major `double` buffers. Every fallible call returns a [`BmcStatus`];
//! on failure a message is kept per thread and can be read with
//! [`bmc_last_error_message`] until the next failing call on that thread.
//! Panics never unwind into C. They are reported as `BMC_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bmc::bounds::{build_bounds, BoundedDistanceProblem, ObservedDistances, PointCloud};
use bmc::embedding::embed;
use bmc::solver::{solve, BoundUpdate, Recovery, SolverConfig};
use bmc::BmcError;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmcStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad shape, size, parameter or non-finite input.
    InvalidArgument = 2,
    /// Bounds are infeasible (a lower bound above its upper bound, etc.).
    Constraint = 3,
    Divergence = 4,
    Numeric = 5,
    /// Output buffer shorter than the value being copied out.
    BufferTooSmall = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmcBoundUpdate {
    Projected = 0,
    Linearized = 1,
}

/// Plain-data mirror of the solver configuration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmcSolverConfig {
    pub rho_zeta_init: f64,
    pub rho_eta_init: f64,
    pub rho_growth: f64,
    pub max_iters: usize,
    /// 0 runs all `max_iters` iterations.
    pub rel_residual_tol: f64,
    pub init_mix: f64,
    pub record_every: usize,
    /// A `BmcBoundUpdate` value. Kept as a plain integer so that an
    /// out-of-range value from C is an error rather than undefined behavior.
    pub bound_update: u32,
}

fn solver_config(c: &BmcSolverConfig) -> Result<SolverConfig, Failure> {
    let bound_update = match c.bound_update {
        x if x == BmcBoundUpdate::Projected as u32 => BoundUpdate::Projected,
        x if x == BmcBoundUpdate::Linearized as u32 => BoundUpdate::Linearized,
        x => return Err(fail(BmcStatus::InvalidArgument, format!("unknown bound_update {x}"))),
    };
    Ok(SolverConfig {
        rho_zeta_init: c.rho_zeta_init,
        rho_eta_init: c.rho_eta_init,
        rho_growth: c.rho_growth,
        max_iters: c.max_iters,
        rel_residual_tol: c.rel_residual_tol,
        init_mix: c.init_mix,
        record_every: c.record_every,
        bound_update,
    })
}

/// Opaque bounded problem.
pub struct BmcProblem(BoundedDistanceProblem);

/// Opaque solver result.
pub struct BmcRecovery(Recovery);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    // Interior NULs would truncate the C string; replace them.
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

struct Failure(BmcStatus, String);

impl From<BmcError> for Failure {
    fn from(e: BmcError) -> Self {
        let status = match &e {
            BmcError::Dimension(_)
            | BmcError::NonFinite(_)
            | BmcError::Parameter(_)
            | BmcError::Index { .. }
            | BmcError::Unsupported(_) => BmcStatus::InvalidArgument,
            BmcError::Constraint(_) => BmcStatus::Constraint,
            BmcError::Divergence { .. } => BmcStatus::Divergence,
            BmcError::Numeric(_) => BmcStatus::Numeric,
            BmcError::Parse { .. }
            | BmcError::BadMagic { .. }
            | BmcError::Truncated { .. }
            | BmcError::CountMismatch { .. }
            | BmcError::Io { .. } => BmcStatus::Io,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: BmcStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BmcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BmcStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            BmcStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(fail(BmcStatus::NullPointer, format!("{name} is NULL")))
    } else {
        Ok(())
    }
}

fn element_count(rows: usize, cols: usize) -> Result<usize, Failure> {
    rows.checked_mul(cols)
        .ok_or_else(|| fail(BmcStatus::InvalidArgument, format!("{rows} x {cols} overflows")))
}

/// # Safety
/// `data` must point to `rows * cols` readable doubles.
unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize, name: &str) -> Result<DMatrix<f64>, Failure> {
    non_null(data, name)?;
    let len = element_count(rows, cols)?;
    let slice = std::slice::from_raw_parts(data, len);
    Ok(DMatrix::from_row_slice(rows, cols, slice))
}

/// # Safety
/// `out` must point to `len` writable doubles.
unsafe fn write_row_major(m: &DMatrix<f64>, out: *mut f64, len: usize) -> Result<(), Failure> {
    non_null(out, "out")?;
    let needed = m.len();
    if len < needed {
        return Err(fail(BmcStatus::BufferTooSmall, format!("buffer holds {len} values, need {needed}")));
    }
    let dst = std::slice::from_raw_parts_mut(out, needed);
    for (k, v) in m.transpose().iter().enumerate() {
        dst[k] = *v;
    }
    Ok(())
}

/// # Safety
/// `out` must be a valid pointer to a handle slot.
unsafe fn emit<T>(value: T, out: *mut *mut T) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bmc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

#[no_mangle]
pub extern "C" fn bmc_solver_config_default() -> BmcSolverConfig {
    let d = SolverConfig::default();
    BmcSolverConfig {
        rho_zeta_init: d.rho_zeta_init,
        rho_eta_init: d.rho_eta_init,
        rho_growth: d.rho_growth,
        max_iters: d.max_iters,
        rel_residual_tol: d.rel_residual_tol,
        init_mix: d.init_mix,
        record_every: d.record_every,
        bound_update: match d.bound_update {
            BoundUpdate::Projected => BmcBoundUpdate::Projected,
            BoundUpdate::Linearized => BmcBoundUpdate::Linearized,
        } as u32,
    }
}

/// Builds a problem from explicit `n x n` row-major bound matrices. Use a
/// value `>= 1e18` (or `+inf`) for "no upper bound".
///
/// # Safety
/// `lower` and `upper` must each point to `n * n` doubles; `out` must be a
/// valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bmc_problem_from_bounds(
    lower: *const f64,
    upper: *const f64,
    n: usize,
    r: usize,
    out: *mut *mut BmcProblem,
) -> BmcStatus {
    guard(|| {
        non_null(out, "out")?;
        let lo = read_matrix(lower, n, n, "lower")?;
        let up = read_matrix(upper, n, n, "upper")?;
        emit(BmcProblem(BoundedDistanceProblem::new(lo, up, r)?), out)
    })
}

/// Builds bounds `alpha_l * d2` and `alpha_u * d2` from the squared
/// distances of an `n x dim` row-major point cloud.
///
/// # Safety
/// `coords` must point to `n * dim` doubles; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bmc_problem_from_points(
    coords: *const f64,
    n: usize,
    dim: usize,
    alpha_l: f64,
    alpha_u: f64,
    r: usize,
    out: *mut *mut BmcProblem,
) -> BmcStatus {
    guard(|| {
        non_null(out, "out")?;
        let cloud = PointCloud::new(read_matrix(coords, n, dim, "coords")?, None)?;
        let problem = build_bounds(&cloud, &alpha_l.into(), &alpha_u.into(), &ObservedDistances::none(), r)?;
        emit(BmcProblem(problem), out)
    })
}

/// Point count of a problem; 0 for NULL.
///
/// # Safety
/// `problem` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bmc_problem_n(problem: *const BmcProblem) -> usize {
    problem.as_ref().map_or(0, |p| p.0.n())
}

/// # Safety
/// `problem` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bmc_problem_free(problem: *mut BmcProblem) {
    if !problem.is_null() {
        drop(Box::from_raw(problem));
    }
}

/// Runs the solver. A NULL `config` uses the defaults.
///
/// # Safety
/// `problem` must be a live handle, `config` NULL or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bmc_solve(
    problem: *const BmcProblem,
    config: *const BmcSolverConfig,
    out: *mut *mut BmcRecovery,
) -> BmcStatus {
    guard(|| {
        non_null(problem, "problem")?;
        non_null(out, "out")?;
        let config = match config.as_ref() {
            Some(c) => solver_config(c)?,
            None => SolverConfig::default(),
        };
        emit(BmcRecovery(solve(&(*problem).0, &config)?), out)
    })
}

/// Point count of a recovery; 0 for NULL.
///
/// # Safety
/// `rec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_n(rec: *const BmcRecovery) -> usize {
    rec.as_ref().map_or(0, |r| r.0.l.n())
}

/// # Safety
/// `rec` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_iters_run(rec: *const BmcRecovery) -> usize {
    rec.as_ref().map_or(0, |r| r.0.iters_run)
}

/// Copies the recovered `n x n` squared-distance matrix, row-major.
///
/// # Safety
/// `rec` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_distances(rec: *const BmcRecovery, out: *mut f64, len: usize) -> BmcStatus {
    guard(|| {
        non_null(rec, "rec")?;
        write_row_major((*rec).0.l.as_matrix(), out, len)
    })
}

/// Copies the `n` descending Gram eigenvalues of the recovered matrix.
///
/// # Safety
/// `rec` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_spectrum(rec: *const BmcRecovery, out: *mut f64, len: usize) -> BmcStatus {
    guard(|| {
        non_null(rec, "rec")?;
        let v = &(*rec).0.spectrum.values;
        write_row_major(&DMatrix::from_column_slice(v.len(), 1, v.as_slice()), out, len)
    })
}

/// Copies the `n` descending singular values of the recovered matrix.
///
/// # Safety
/// `rec` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_singular_values(
    rec: *const BmcRecovery,
    out: *mut f64,
    len: usize,
) -> BmcStatus {
    guard(|| {
        non_null(rec, "rec")?;
        let sv = (*rec).0.distance_singular_values()?;
        write_row_major(&DMatrix::from_column_slice(sv.len(), 1, &sv), out, len)
    })
}

/// Residuals of the last recorded iteration.
///
/// # Safety
/// `rec` must be a live handle; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_final_residual(
    rec: *const BmcRecovery,
    primal_residual: *mut f64,
    max_violation: *mut f64,
) -> BmcStatus {
    guard(|| {
        non_null(rec, "rec")?;
        non_null(primal_residual, "primal_residual")?;
        non_null(max_violation, "max_violation")?;
        let last = (*rec)
            .0
            .final_residual()
            .ok_or_else(|| fail(BmcStatus::InvalidArgument, "no iterations were run"))?;
        *primal_residual = last.primal_residual;
        *max_violation = last.max_violation;
        Ok(())
    })
}

/// Writes the `n x p` embedding of the recovered matrix, row-major.
///
/// # Safety
/// `rec` must be a live handle and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn bmc_embed(rec: *const BmcRecovery, p: usize, out: *mut f64, len: usize) -> BmcStatus {
    guard(|| {
        non_null(rec, "rec")?;
        let e = embed(&(*rec).0.l, p)?;
        write_row_major(&e.coords, out, len)
    })
}

/// # Safety
/// `rec` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bmc_recovery_free(rec: *mut BmcRecovery) {
    if !rec.is_null() {
        drop(Box::from_raw(rec));
    }
}
