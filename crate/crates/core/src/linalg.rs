//! Dense linear-algebra helpers shared by the oracle and the data-driven routines.
//!
//! Every pseudo-inverse in the crate goes through [`pinv_tolerance`]: singular values
//! at or below `1e-10 * sigma_max * max(rows, cols)` are treated as zero.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative factor of the truncated-spectrum pseudo-inverse.
pub const PINV_RTOL: f64 = 1e-10;

/// Eigenvalue floor (relative to the largest eigenvalue) for inverse square roots.
pub const PD_FLOOR: f64 = 1e-12;

/// Truncation threshold for a matrix with the given largest singular value and shape.
pub fn pinv_tolerance(sigma_max: f64, rows: usize, cols: usize) -> f64 {
    PINV_RTOL * sigma_max * rows.max(cols) as f64
}

/// A pseudo-inverse together with the spectrum facts callers report in diagnostics.
#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
    /// Smallest singular value of the input (including truncated ones).
    pub sigma_min: f64,
}

impl Pinv {
    /// Full rank means rank equals the smaller dimension of the original matrix.
    pub fn is_full_rank(&self, min_dim: usize) -> bool {
        self.rank == min_dim
    }
}

/// Truncated-SVD Moore-Penrose pseudo-inverse.
pub fn pinv(a: &DMatrix<f64>) -> Pinv {
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Pinv {
            matrix: DMatrix::zeros(cols, rows),
            rank: 0,
            sigma_max: 0.0,
            sigma_min: 0.0,
        };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
    let sigma_min = if rows.min(cols) > sv.len() {
        0.0
    } else {
        sv.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let tol = pinv_tolerance(sigma_max, rows, cols);
    let mut matrix = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in sv.iter().enumerate() {
        if s > tol {
            rank += 1;
            // V_k * (1/s) * U_k^T
            matrix += (v_t.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    Pinv {
        matrix,
        rank,
        sigma_max,
        sigma_min,
    }
}

/// Result of `lhs * a^+` for a data matrix `a`.
#[derive(Debug, Clone)]
pub struct RightSolve {
    pub value: DMatrix<f64>,
    pub rank: usize,
    pub sigma_max: f64,
    pub sigma_min: f64,
}

impl RightSolve {
    pub fn full_row_rank(&self, rows: usize) -> bool {
        self.rank == rows
    }
}

/// Computes `lhs * a^+` with the truncated pseudo-inverse of `a`.
///
/// Wide data matrices (many more columns than rows) go through the Gram identity
/// `a^+ = a^T (a a^T)^+`, truncating eigenvalues of `a a^T` at the squared singular
/// value threshold. Other shapes use the SVD directly.
pub fn right_solve(lhs: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<RightSolve> {
    if lhs.ncols() != a.ncols() {
        return Err(Error::shape(
            "right_solve.lhs",
            format!("{} columns", a.ncols()),
            format!("{} columns", lhs.ncols()),
        ));
    }
    let (rows, cols) = a.shape();
    if cols >= 4 * rows && rows > 0 {
        let gram = a * a.transpose();
        let cross = lhs * a.transpose();
        let sp = gram_pinv(&gram, rows, cols);
        Ok(RightSolve {
            value: cross * &sp.matrix,
            rank: sp.rank,
            sigma_max: sp.sigma_max,
            sigma_min: if cols < rows { 0.0 } else { sp.sigma_min },
        })
    } else {
        let p = pinv(a);
        Ok(RightSolve {
            value: lhs * &p.matrix,
            rank: p.rank,
            sigma_max: p.sigma_max,
            sigma_min: if cols < rows { 0.0 } else { p.sigma_min },
        })
    }
}

/// Pseudo-inverse of a Gram matrix `a a^T` of an `rows x cols` data matrix `a`.
///
/// Singular values of `a` are recovered as square roots of the Gram eigenvalues and
/// truncated with the same policy as [`pinv`].
pub fn gram_pinv(gram: &DMatrix<f64>, rows: usize, cols: usize) -> Pinv {
    let r = gram.nrows();
    if r == 0 {
        return Pinv {
            matrix: DMatrix::zeros(0, 0),
            rank: 0,
            sigma_max: 0.0,
            sigma_min: 0.0,
        };
    }
    let eig = SymmetricEigen::new(symmetrize(gram));
    let lambda_max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let sigma_max = lambda_max.max(0.0).sqrt();
    let tol = pinv_tolerance(sigma_max, rows, cols);
    let mut matrix = DMatrix::zeros(r, r);
    let mut rank = 0;
    let mut sigma_min = f64::INFINITY;
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    for k in order {
        let lambda = eig.eigenvalues[k];
        let s = lambda.max(0.0).sqrt();
        sigma_min = sigma_min.min(s);
        // at most `cols` nonzero singular values when there are fewer samples than rows
        if s > tol && rank < cols {
            rank += 1;
            let v = eig.eigenvectors.column(k);
            matrix += (v / lambda) * v.transpose();
        }
    }
    if cols < rows {
        sigma_min = 0.0;
    }
    Pinv {
        matrix,
        rank,
        sigma_max,
        sigma_min,
    }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}

/// Symmetric PSD square root by eigendecomposition.
///
/// Eigenvalues in `(-1e-10 * max(1, lambda_max), 0)` are clamped to zero; anything more
/// negative is rejected.
pub fn psd_sqrt(cov: &DMatrix<f64>, name: &str) -> Result<DMatrix<f64>> {
    check_square(cov, name)?;
    if asymmetry(cov) > 1e-10 * (1.0 + cov.abs().max()) {
        return Err(Error::InvalidCovariance {
            name: name.into(),
            reason: "not symmetric".into(),
        });
    }
    let eig = SymmetricEigen::new(symmetrize(cov));
    let scale = eig.eigenvalues.iter().cloned().fold(1.0, f64::max);
    let mut roots = DVector::zeros(eig.eigenvalues.len());
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -1e-10 * scale {
            return Err(Error::InvalidCovariance {
                name: name.into(),
                reason: format!("negative eigenvalue {lambda:.3e}"),
            });
        }
        roots[k] = lambda.max(0.0).sqrt();
    }
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&roots) * v.transpose())
}

/// Symmetric inverse square root of a positive definite matrix.
///
/// Fails with [`Error::IllPosedCost`] when an eigenvalue is below `1e-12 * lambda_max`.
pub fn inv_sqrt_pd(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(p));
    let max_eig = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_eig.is_nan() || max_eig <= 0.0 || min_eig < PD_FLOOR * max_eig {
        return Err(Error::IllPosedCost { min_eig, max_eig });
    }
    let inv_roots = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&inv_roots) * v.transpose())
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Largest singular value (the induced 2-norm).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(0.0, f64::max)
}

/// Smallest singular value among the `min(rows, cols)` ones.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Numerical rank under the crate-wide truncation policy.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let tol = pinv_tolerance(smax, m.nrows(), m.ncols());
    sv.iter().filter(|&&s| s > tol).count()
}

/// `I_k (x) block`.
pub fn block_diag_repeat(block: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * k, c * k);
    for i in 0..k {
        out.view_mut((i * r, i * c), (r, c)).copy_from(block);
    }
    out
}

/// Vertically stacks matrices with equal column counts.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        out.view_mut((r, 0), b.shape()).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontally concatenates matrices with equal row counts.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        out.view_mut((0, c), b.shape()).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Reshapes a chronologically stacked vector into a `block x steps` matrix.
pub fn unstack(v: &DVector<f64>, block: usize) -> DMatrix<f64> {
    assert!(block > 0 && v.len().is_multiple_of(block), "unstack length mismatch");
    DMatrix::from_column_slice(block, v.len() / block, v.as_slice())
}

/// Inverse of [`unstack`].
pub fn stack_columns(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub(crate) fn check_square(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::shape(
            name,
            "non-empty square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

pub(crate) fn check_shape(m: &DMatrix<f64>, name: &str, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::shape(
            name,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}
