//! LQR gain directly from noisy open-loop data.
//!
//! The data map `M = X [X0; U]^+` predicts stacked states from an initial state and an
//! input sequence. With `P = M'(I (x) Q_x)M + blkdiag(0, I (x) R_u)` the optimal
//! finite-horizon trajectory from `x0` is
//!
//! ```text
//! [u_v; x_v] = [H; M] P^(-1/2) ([I_n 0] P^(-1/2))^+ x0,   H = [0 I_mT]
//! ```
//!
//! and the gain is read off as `K = u_m x_m^+` after reshaping the trajectories
//! chronologically.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, block_diag_repeat, inv_sqrt_pd, pinv, right_solve, unstack};
use crate::system::{CostWeights, TrajectoryDataset};

/// Data-built quantities shared by every initial state.
#[derive(Debug, Clone)]
pub struct LqrSynthesis {
    /// `[0 I_mT]`, `mT x (n + mT)`.
    pub h: DMatrix<f64>,
    /// `n(T+1) x (n + mT)`.
    pub m_map: DMatrix<f64>,
    /// `(n + mT) x (n + mT)`, symmetric positive definite.
    pub p: DMatrix<f64>,
    pub p_inv_sqrt: DMatrix<f64>,
    /// `||M [X0; U] - X||_F / ||X||_F`.
    pub fit_residual: f64,
    /// Smallest singular value of `[X0; U]`.
    pub excitation_sigma_min: f64,
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
}

/// Optimal trajectory estimate from one initial state.
#[derive(Debug, Clone)]
pub struct LqrTrajectoryEstimate {
    /// `mT`
    pub u_v: DVector<f64>,
    /// `n(T+1)`
    pub x_v: DVector<f64>,
    /// `m x T`
    pub u_m: DMatrix<f64>,
    /// `n x (T+1)`
    pub x_m: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct LqrGainEstimate {
    pub k: DMatrix<f64>,
    /// `sigma_max(x_m - x_m*) / sigma_min(x_m*)` when a reference was supplied.
    pub kappa: Option<f64>,
    /// Smallest singular value of the concatenated `x_m` used for the gain.
    pub sigma_min_xm: f64,
    /// Normal-equation residual `||(K x_m - u_m) x_m'||_F`.
    pub normal_residual: f64,
    pub trajectories: Vec<LqrTrajectoryEstimate>,
}

pub fn build_synthesis(dataset: &TrajectoryDataset, weights: &CostWeights) -> Result<LqrSynthesis> {
    let (n, m, horizon) = (dataset.n, dataset.m, dataset.horizon);
    linalg::check_shape(&weights.q_x, "Q_x", n, n)?;
    linalg::check_shape(&weights.r_u, "R_u", m, m)?;
    let dim = n + m * horizon;
    let regressor = dataset.x0_and_inputs();
    let solve = right_solve(&dataset.x, &regressor)?;
    if !solve.full_row_rank(dim) {
        return Err(Error::InsufficientExcitation {
            rows: dim,
            cols: dataset.len(),
            sigma_min: solve.sigma_min,
            required: dim,
        });
    }
    let m_map = solve.value;
    let fit_residual = (&m_map * &regressor - &dataset.x).norm() / dataset.x.norm().max(f64::MIN_POSITIVE);

    let state_weight = block_diag_repeat(&weights.q_x, horizon + 1);
    let mut input_weight = DMatrix::zeros(dim, dim);
    input_weight
        .view_mut((n, n), (m * horizon, m * horizon))
        .copy_from(&block_diag_repeat(&weights.r_u, horizon));
    let p = linalg::symmetrize(&(m_map.transpose() * state_weight * &m_map + input_weight));
    let p_inv_sqrt = inv_sqrt_pd(&p)?;

    let mut h = DMatrix::zeros(m * horizon, dim);
    h.view_mut((0, n), (m * horizon, m * horizon)).fill_with_identity();
    Ok(LqrSynthesis {
        h,
        m_map,
        p,
        p_inv_sqrt,
        fit_residual,
        excitation_sigma_min: solve.sigma_min,
        n,
        m,
        horizon,
    })
}

pub fn lqr_trajectories(synth: &LqrSynthesis, x0: &DVector<f64>) -> Result<LqrTrajectoryEstimate> {
    let n = synth.n;
    if x0.len() != n {
        return Err(Error::shape(
            "x0",
            format!("length {n}"),
            format!("length {}", x0.len()),
        ));
    }
    // [I_n 0] P^(-1/2) is the first n rows of the symmetric inverse root
    let selector = synth.p_inv_sqrt.rows(0, n).into_owned();
    let sel_pinv = pinv(&selector);
    if sel_pinv.rank < n {
        return Err(Error::InfeasibleInitialState { rank: sel_pinv.rank, n });
    }
    let z = &synth.p_inv_sqrt * (&sel_pinv.matrix * x0);
    let u_v = &synth.h * &z;
    let x_v = &synth.m_map * &z;
    Ok(LqrTrajectoryEstimate {
        u_m: unstack(&u_v, synth.m),
        x_m: unstack(&x_v, n),
        u_v,
        x_v,
    })
}

/// `n` canonical basis vectors, the default set of initial states.
pub fn canonical_initial_states(n: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect()
}

/// Horizontally concatenated `(u_m, x_m[:, 0..T])` over all estimates.
fn concatenate(estimates: &[LqrTrajectoryEstimate], horizon: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let us: Vec<&DMatrix<f64>> = estimates.iter().map(|e| &e.u_m).collect();
    let xs: Vec<DMatrix<f64>> = estimates
        .iter()
        .map(|e| e.x_m.columns(0, horizon).into_owned())
        .collect();
    let xs_ref: Vec<&DMatrix<f64>> = xs.iter().collect();
    (linalg::hstack(&us), linalg::hstack(&xs_ref))
}

/// `K = u_m x_m^+` from already computed trajectory estimates.
///
/// Only the first `T` state columns enter the fit, pairing `x(t)` with `u(t)`.
/// `reference`, when given, holds one `n x (T+1)` (or `n x T`) reference state trajectory
/// per estimate and enables the kappa diagnostic.
pub fn gain_from_trajectories(
    estimates: Vec<LqrTrajectoryEstimate>,
    reference: Option<&[DMatrix<f64>]>,
) -> Result<LqrGainEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidSpec("at least one initial state is required".into()))?;
    let (n, horizon) = (first.x_m.nrows(), first.u_m.ncols());
    let (u_cat, x_cat) = concatenate(&estimates, horizon);
    let xp = pinv(&x_cat);
    if xp.rank < n {
        return Err(Error::DegenerateTrajectory {
            sigma_min: xp.sigma_min,
            rank: xp.rank,
            n,
        });
    }
    let k = &u_cat * &xp.matrix;
    let normal_residual = ((&k * &x_cat - &u_cat) * x_cat.transpose()).norm();
    let kappa = match reference {
        None => None,
        Some(refs) => {
            if refs.len() != estimates.len() {
                return Err(Error::shape("reference", estimates.len(), refs.len()));
            }
            let cols: Vec<DMatrix<f64>> = refs.iter().map(|r| r.columns(0, horizon).into_owned()).collect();
            let cols_ref: Vec<&DMatrix<f64>> = cols.iter().collect();
            let x_star = linalg::hstack(&cols_ref);
            Some(linalg::spectral_norm(&(&x_cat - &x_star)) / linalg::sigma_min(&x_star))
        }
    };
    Ok(LqrGainEstimate {
        k,
        kappa,
        sigma_min_xm: xp.sigma_min,
        normal_residual,
        trajectories: estimates,
    })
}

/// Data-driven LQR gain from a set of initial states.
pub fn lqr_gain_from_data(
    dataset: &TrajectoryDataset,
    weights: &CostWeights,
    x0_set: &[DVector<f64>],
    reference: Option<&[DMatrix<f64>]>,
) -> Result<LqrGainEstimate> {
    if x0_set.is_empty() {
        return Err(Error::InvalidSpec("at least one initial state is required".into()));
    }
    let synth = build_synthesis(dataset, weights)?;
    let estimates = x0_set
        .iter()
        .map(|x0| lqr_trajectories(&synth, x0))
        .collect::<Result<Vec<_>>>()?;
    gain_from_trajectories(estimates, reference)
}
