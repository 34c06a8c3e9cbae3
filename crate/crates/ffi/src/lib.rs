//! C interface to `ddlqg`.
//!
//! Matrices cross the boundary as dense row-major `double` arrays. Trajectory data uses the
//! stacked layout of the core crate: trajectory `i` occupies a contiguous block, time-major,
//! with the component index fastest. Every fallible call returns a [`DdlqgStatus`]; the text
//! of the last failure on the calling thread is available from [`ddlqg_last_error`].

use ddlqg::dd_kalman::{estimate_state, filter_bank_from_data, DataFilterBank};
use ddlqg::dd_lqr::{canonical_initial_states, lqr_gain_from_data};
use ddlqg::oracle::lqr_gain;
use ddlqg::system::{
    generate_open_loop_dataset, CostWeights, ExperimentInputSpec, LinearSystem, Trajectory, TrajectoryDataset,
};
use ddlqg::window::EstimationWindow;
use ddlqg::Error;
use nalgebra::{DMatrix, DVector};
use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdlqgStatus {
    Ok = 0,
    NullPointer = 1,
    Shape = 2,
    InvalidCovariance = 3,
    InvalidSpec = 4,
    InsufficientExcitation = 5,
    IllPosedCost = 6,
    InfeasibleInitialState = 7,
    DegenerateTrajectory = 8,
    InsufficientData = 9,
    RiccatiDivergence = 10,
    AssumptionViolation = 11,
    DegenerateRealization = 12,
    Instability = 13,
    TooFewEpisodes = 14,
    WindowRankDeficient = 15,
    Other = 16,
    Panic = 17,
}

impl From<&Error> for DdlqgStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape { .. } => DdlqgStatus::Shape,
            Error::InvalidCovariance { .. } => DdlqgStatus::InvalidCovariance,
            Error::InvalidSpec(_) => DdlqgStatus::InvalidSpec,
            Error::InsufficientExcitation { .. } => DdlqgStatus::InsufficientExcitation,
            Error::IllPosedCost { .. } => DdlqgStatus::IllPosedCost,
            Error::InfeasibleInitialState { .. } => DdlqgStatus::InfeasibleInitialState,
            Error::DegenerateTrajectory { .. } => DdlqgStatus::DegenerateTrajectory,
            Error::InsufficientData { .. } => DdlqgStatus::InsufficientData,
            Error::RiccatiDivergence { .. } => DdlqgStatus::RiccatiDivergence,
            Error::AssumptionViolation(_) => DdlqgStatus::AssumptionViolation,
            Error::DegenerateRealization { .. } => DdlqgStatus::DegenerateRealization,
            Error::Instability { .. } => DdlqgStatus::Instability,
            Error::TooFewEpisodes { .. } => DdlqgStatus::TooFewEpisodes,
            Error::WindowRankDeficient { .. } => DdlqgStatus::WindowRankDeficient,
            _ => DdlqgStatus::Other,
        }
    }
}

/// Plant and noise model.
pub struct DdlqgSystem(LinearSystem);
/// Quadratic cost weights.
pub struct DdlqgWeights(CostWeights);
/// Open-loop trajectory data.
pub struct DdlqgDataset(TrajectoryDataset);
/// Data-driven bank of filter gains.
pub struct DdlqgFilterBank(DataFilterBank);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let text = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

struct Fail(DdlqgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail((&e).into(), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DdlqgStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DdlqgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DdlqgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DdlqgStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn row_major(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>, Fail> {
    Ok(DMatrix::from_row_slice(rows, cols, slice(data, rows * cols, what)?))
}

unsafe fn write_row_major(m: &DMatrix<f64>, out: *mut f64, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    let dst = std::slice::from_raw_parts_mut(out, m.len());
    for (i, row) in m.row_iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            dst[i * m.ncols() + j] = *v;
        }
    }
    Ok(())
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn release<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn ddlqg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ddlqg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a plant from `A` (n x n), `B` (n x m), `C` (p x n), `Q_w` (n x n), `R_v` (p x p)
/// and the initial-state covariance `Sigma0` (n x n).
///
/// # Safety
/// Every matrix pointer must reference the stated number of doubles and `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ddlqg_system_new(
    n: usize,
    m: usize,
    p: usize,
    a: *const f64,
    b: *const f64,
    c: *const f64,
    q_w: *const f64,
    r_v: *const f64,
    sigma0: *const f64,
    out: *mut *mut DdlqgSystem,
) -> DdlqgStatus {
    guard(|| {
        let sys = LinearSystem::new(
            row_major(a, n, n, "A")?,
            row_major(b, n, m, "B")?,
            row_major(c, p, n, "C")?,
            row_major(q_w, n, n, "Q_w")?,
            row_major(r_v, p, p, "R_v")?,
            row_major(sigma0, n, n, "Sigma0")?,
        )?;
        emit(out, DdlqgSystem(sys))
    })
}

/// # Safety
/// `system` must be NULL or a handle from [`ddlqg_system_new`] that was not freed.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_system_free(system: *mut DdlqgSystem) {
    release(system)
}

/// Writes the state, input and output dimensions of `system`.
///
/// # Safety
/// `system` must be a live handle; each output pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_system_dims(
    system: *const DdlqgSystem,
    n: *mut usize,
    m: *mut usize,
    p: *mut usize,
) -> DdlqgStatus {
    guard(|| {
        let s = &handle(system, "system")?.0;
        for (dst, v) in [(n, s.n()), (m, s.m()), (p, s.p())] {
            if let Some(d) = dst.as_mut() {
                *d = v;
            }
        }
        Ok(())
    })
}

/// Cost weights `Q_x` (n x n, positive semidefinite) and `R_u` (m x m, positive definite).
///
/// # Safety
/// `q_x` and `r_u` must reference `n*n` and `m*m` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_weights_new(
    n: usize,
    m: usize,
    q_x: *const f64,
    r_u: *const f64,
    out: *mut *mut DdlqgWeights,
) -> DdlqgStatus {
    guard(|| {
        let w = CostWeights::new(row_major(q_x, n, n, "Q_x")?, row_major(r_u, m, m, "R_u")?)?;
        emit(out, DdlqgWeights(w))
    })
}

/// # Safety
/// `weights` must be NULL or a live handle from [`ddlqg_weights_new`].
#[no_mangle]
pub unsafe extern "C" fn ddlqg_weights_free(weights: *mut DdlqgWeights) {
    release(weights)
}

/// Simulates `trajectories` open-loop runs of length `horizon` with Gaussian excitation of
/// covariance `sigma_u` (m x m). Identical arguments give identical data.
///
/// # Safety
/// `system` must be live, `sigma_u` must reference `m*m` doubles and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_dataset_simulate(
    system: *const DdlqgSystem,
    sigma_u: *const f64,
    horizon: usize,
    trajectories: usize,
    seed: u64,
    out: *mut *mut DdlqgDataset,
) -> DdlqgStatus {
    guard(|| {
        let sys = &handle(system, "system")?.0;
        let spec = ExperimentInputSpec::new(
            row_major(sigma_u, sys.m(), sys.m(), "sigma_u")?,
            horizon,
            trajectories,
            seed,
        )?;
        emit(out, DdlqgDataset(generate_open_loop_dataset(sys, &spec)?))
    })
}

/// Wraps recorded data. Trajectory `i` of `count` holds `u` (`m*horizon` values),
/// `x` (`n*(horizon+1)`) and `y` (`p*(horizon+1)`) starting at offset `i` times that length.
///
/// # Safety
/// `u`, `x` and `y` must reference `count` blocks of the stated sizes; `out` must be writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn ddlqg_dataset_from_data(
    n: usize,
    m: usize,
    p: usize,
    horizon: usize,
    count: usize,
    u: *const f64,
    x: *const f64,
    y: *const f64,
    out: *mut *mut DdlqgDataset,
) -> DdlqgStatus {
    guard(|| {
        let (lu, lx, ly) = (m * horizon, n * (horizon + 1), p * (horizon + 1));
        let u = slice(u, lu * count, "u")?;
        let x = slice(x, lx * count, "x")?;
        let y = slice(y, ly * count, "y")?;
        let trajs: Vec<Trajectory> = (0..count)
            .map(|i| Trajectory {
                inputs: DMatrix::from_column_slice(m, horizon, &u[i * lu..(i + 1) * lu]),
                states: DMatrix::from_column_slice(n, horizon + 1, &x[i * lx..(i + 1) * lx]),
                outputs: DMatrix::from_column_slice(p, horizon + 1, &y[i * ly..(i + 1) * ly]),
            })
            .collect();
        let ds = TrajectoryDataset::from_trajectories(&trajs, vec![0; count])?;
        emit(out, DdlqgDataset(ds))
    })
}

/// Writes the horizon and the number of trajectories.
///
/// # Safety
/// `dataset` must be live; each output pointer must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_dataset_shape(
    dataset: *const DdlqgDataset,
    horizon: *mut usize,
    count: *mut usize,
) -> DdlqgStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        if let Some(h) = horizon.as_mut() {
            *h = ds.horizon;
        }
        if let Some(c) = count.as_mut() {
            *c = ds.len();
        }
        Ok(())
    })
}

/// Copies the trajectory-major outputs of the dataset into `y`, which must hold
/// `p*(horizon+1)*count` doubles.
///
/// # Safety
/// `dataset` must be live and `y` must be writable for the full length.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_dataset_outputs(dataset: *const DdlqgDataset, y: *mut f64) -> DdlqgStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        if y.is_null() {
            return Err(null("y"));
        }
        ptr::copy_nonoverlapping(ds.y.as_ptr(), y, ds.y.len());
        Ok(())
    })
}

/// # Safety
/// `dataset` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_dataset_free(dataset: *mut DdlqgDataset) {
    release(dataset)
}

/// Model-based LQR gain `K` (m x n, row-major) with the convention `u = K x`.
///
/// # Safety
/// Handles must be live and `k` must hold `m*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_lqr_oracle(
    system: *const DdlqgSystem,
    weights: *const DdlqgWeights,
    k: *mut f64,
) -> DdlqgStatus {
    guard(|| {
        let sol = lqr_gain(&handle(system, "system")?.0, &handle(weights, "weights")?.0)?;
        write_row_major(&sol.k, k, "k")
    })
}

/// LQR gain estimated from trajectory data alone (m x n, row-major).
///
/// # Safety
/// Handles must be live and `k` must hold `m*n` doubles.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_lqr_from_data(
    dataset: *const DdlqgDataset,
    weights: *const DdlqgWeights,
    k: *mut f64,
) -> DdlqgStatus {
    guard(|| {
        let ds = &handle(dataset, "dataset")?.0;
        let est = lqr_gain_from_data(
            ds,
            &handle(weights, "weights")?.0,
            &canonical_initial_states(ds.n),
            None,
        )?;
        write_row_major(&est.k, k, "k")
    })
}

/// Fits one filter gain per time step `0..=horizon` from output and input data.
///
/// # Safety
/// `dataset` must be live and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_filter_bank_new(
    dataset: *const DdlqgDataset,
    out: *mut *mut DdlqgFilterBank,
) -> DdlqgStatus {
    guard(|| {
        let bank = filter_bank_from_data(&handle(dataset, "dataset")?.0)?;
        emit(out, DdlqgFilterBank(bank))
    })
}

/// Last time index with a gain, or 0 for a NULL handle.
///
/// # Safety
/// `bank` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_filter_bank_horizon(bank: *const DdlqgFilterBank) -> usize {
    bank.as_ref().map_or(0, |b| b.0.gains.len().saturating_sub(1))
}

/// State estimate at time `t` from inputs `u(0..t-1)` (`m*t` values) and outputs
/// `y(0..t)` (`p*(t+1)` values), both time-major. Writes `n` doubles to `x_hat`.
///
/// # Safety
/// `bank` must be live and the buffers must have the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_filter_bank_estimate(
    bank: *const DdlqgFilterBank,
    t: usize,
    u_hist: *const f64,
    u_len: usize,
    y_hist: *const f64,
    y_len: usize,
    x_hat: *mut f64,
) -> DdlqgStatus {
    guard(|| {
        let bank = &handle(bank, "bank")?.0;
        let window = EstimationWindow::new(
            t,
            DVector::from_column_slice(slice(u_hist, u_len, "u_hist")?),
            DVector::from_column_slice(slice(y_hist, y_len, "y_hist")?),
        );
        let x = estimate_state(bank, &window)?;
        if x_hat.is_null() {
            return Err(null("x_hat"));
        }
        ptr::copy_nonoverlapping(x.as_ptr(), x_hat, x.len());
        Ok(())
    })
}

/// # Safety
/// `bank` must be NULL or a live filter-bank handle.
#[no_mangle]
pub unsafe extern "C" fn ddlqg_filter_bank_free(bank: *mut DdlqgFilterBank) {
    release(bank)
}
