//! Per-time least-squares filter gains `L_t = X_t [U_{t-1}; Y_t]^+`.
//!
//! The rows of `Z_t = [U_{t-1}; Y_t]` are a subset of the rows of `Z_T`, so a single
//! Gram matrix `Z_T Z_T'` and cross product `X Z_T'` serve every `t`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, gram_pinv, pinv};
use crate::system::TrajectoryDataset;
use crate::window::{EstimationWindow, StackedEstimator};

#[derive(Debug, Clone)]
pub struct DataFilterBank {
    /// `L_t^D`, `n x (mt + p(t+1))`, for `t = 0..=T`.
    pub gains: Vec<DMatrix<f64>>,
    /// Smallest singular value of `Z_t` per `t`.
    pub conditioning: Vec<f64>,
    n: usize,
    m: usize,
    p: usize,
}

/// Row indices of `Z_t` inside `Z_T = [U; Y]` (with `U` holding `mT` rows).
fn z_rows(t: usize, m: usize, p: usize, horizon: usize) -> Vec<usize> {
    let mut rows: Vec<usize> = (0..m * t).collect();
    rows.extend((0..p * (t + 1)).map(|r| m * horizon + r));
    rows
}

fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Builds every gain of the bank. Fails on the first `t` whose `Z_t` lacks full row rank.
pub fn filter_bank_from_data(dataset: &TrajectoryDataset) -> Result<DataFilterBank> {
    let (n, m, p, horizon) = (dataset.n, dataset.m, dataset.p, dataset.horizon);
    let samples = dataset.len();
    let z_full = linalg::vstack(&[&dataset.u, &dataset.y]);
    let gram = &z_full * z_full.transpose();
    let cross = &dataset.x * z_full.transpose();

    let results: Vec<(DMatrix<f64>, f64, usize)> = (0..=horizon)
        .into_par_iter()
        .map(|t| {
            let rows = z_rows(t, m, p, horizon);
            let dim = rows.len();
            let x_rows: Vec<usize> = (t * n..(t + 1) * n).collect();
            let g = select(&gram, &rows, &rows);
            let gp = if samples >= 4 * dim {
                gram_pinv(&g, dim, samples)
            } else {
                // small sample counts: use the SVD of Z_t itself
                let z_t = select(&z_full, &rows, &(0..samples).collect::<Vec<_>>());
                let mut sp = pinv(&z_t);
                sp.matrix = sp.matrix.transpose() * &sp.matrix;
                if samples < dim {
                    sp.sigma_min = 0.0;
                }
                sp
            };
            let l = select(&cross, &x_rows, &rows) * &gp.matrix;
            (l, gp.sigma_min, gp.rank)
        })
        .collect();

    let mut gains = Vec::with_capacity(horizon + 1);
    let mut conditioning = Vec::with_capacity(horizon + 1);
    for (t, (l, sigma_min, rank)) in results.into_iter().enumerate() {
        let dim = m * t + p * (t + 1);
        if rank < dim {
            return Err(Error::InsufficientData {
                t,
                rows: dim,
                cols: samples,
                sigma_min,
            });
        }
        gains.push(l);
        conditioning.push(sigma_min);
    }
    Ok(DataFilterBank {
        gains,
        conditioning,
        n,
        m,
        p,
    })
}

impl DataFilterBank {
    /// `||(X_t - L_t Z_t) Z_t'||_F / ||X_t||_F` for every `t`.
    pub fn normal_residuals(&self, dataset: &TrajectoryDataset) -> Vec<f64> {
        (0..self.gains.len())
            .map(|t| {
                let z = linalg::vstack(&[&dataset.u_through(t as isize - 1), &dataset.y_through(t)]);
                let x = dataset.x_at(t);
                ((&x - &self.gains[t] * &z) * z.transpose()).norm() / x.norm()
            })
            .collect()
    }
}

impl StackedEstimator for DataFilterBank {
    fn state_dim(&self) -> usize {
        self.n
    }
    fn input_dim(&self) -> usize {
        self.m
    }
    fn output_dim(&self) -> usize {
        self.p
    }
    fn horizon(&self) -> usize {
        self.gains.len() - 1
    }
    fn gain(&self, t: usize) -> &DMatrix<f64> {
        &self.gains[t]
    }
}

/// `L_t [u_hist; y_hist]`.
pub fn estimate_state(bank: &dyn StackedEstimator, window: &EstimationWindow) -> Result<DVector<f64>> {
    bank.estimate(window)
}
