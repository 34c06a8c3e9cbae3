//! Monte Carlo checks of the two Gaussian concentration bounds used in the error analysis.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, psd_sqrt};
use crate::rng::{derive_seed, domain, standard_normal_matrix, stream, stream_rng};

const PRODUCT_CHECK: u64 = 1;
const SINGULAR_VALUE_CHECK: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductCheck {
    pub n: usize,
    pub m: usize,
    pub samples: usize,
    pub delta: f64,
    pub reps: usize,
    /// `4 ||Sa||^1/2 ||Sb||^1/2 sqrt(N (n+m) log(9/delta))`.
    pub threshold: f64,
    pub violations: usize,
    pub frequency: f64,
    /// Largest observed `||A B'||_2 / threshold`.
    pub max_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularValueCheck {
    pub n: usize,
    pub samples: usize,
    pub delta: f64,
    pub reps: usize,
    /// Fraction of reps with `sigma_min < sqrt(N)/2`.
    pub freq_min: f64,
    /// Fraction of reps with `sigma_max > 3 sqrt(N)/2`.
    pub freq_max: f64,
    pub mean_sigma_min_ratio: f64,
    pub mean_sigma_max_ratio: f64,
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidSpec(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

fn check_reps(reps: usize) -> Result<()> {
    if reps == 0 {
        return Err(Error::InvalidSpec("reps must be positive".into()));
    }
    Ok(())
}

/// Smallest `N` satisfying `N >= 2(n+m) log(1/delta)`.
pub fn product_min_samples(n: usize, m: usize, delta: f64) -> usize {
    (2.0 * (n + m) as f64 * (1.0 / delta).ln()).ceil() as usize
}

/// Smallest `N` satisfying `N >= 8n + 16 log(1/delta)`.
pub fn singular_value_min_samples(n: usize, delta: f64) -> usize {
    (8.0 * n as f64 + 16.0 * (1.0 / delta).ln()).ceil() as usize
}

/// Identity-covariance version of [`lemma_check_gaussian_product_cov`].
pub fn lemma_check_gaussian_product(
    n: usize,
    m: usize,
    samples: usize,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<ProductCheck> {
    lemma_check_gaussian_product_cov(
        &DMatrix::identity(n, n),
        &DMatrix::identity(m, m),
        samples,
        delta,
        reps,
        seed,
    )
}

/// Fraction of reps in which `||A B'||_2` exceeds the bound, with the columns of `A` and
/// `B` drawn independently from `N(0, Sigma_a)` and `N(0, Sigma_b)`.
pub fn lemma_check_gaussian_product_cov(
    sigma_a: &DMatrix<f64>,
    sigma_b: &DMatrix<f64>,
    samples: usize,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<ProductCheck> {
    check_delta(delta)?;
    check_reps(reps)?;
    linalg::check_square(sigma_a, "Sigma_a")?;
    linalg::check_square(sigma_b, "Sigma_b")?;
    let (n, m) = (sigma_a.nrows(), sigma_b.nrows());
    let required = product_min_samples(n, m, delta);
    if samples < required {
        return Err(Error::LemmaPrecondition { required, got: samples });
    }
    let root_a = psd_sqrt(sigma_a, "Sigma_a")?;
    let root_b = psd_sqrt(sigma_b, "Sigma_b")?;
    let threshold = 4.0
        * linalg::spectral_norm(sigma_a).sqrt()
        * linalg::spectral_norm(sigma_b).sqrt()
        * (samples as f64 * (n + m) as f64 * (9.0 / delta).ln()).sqrt();
    let ratios: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(
                derive_seed(seed, &[domain::LEMMA, PRODUCT_CHECK, rep as u64]),
                stream::EXCITATION,
            );
            let a = &root_a * standard_normal_matrix(&mut rng, n, samples);
            let b = &root_b * standard_normal_matrix(&mut rng, m, samples);
            linalg::spectral_norm(&(a * b.transpose())) / threshold
        })
        .collect();
    let violations = ratios.iter().filter(|&&r| r > 1.0).count();
    Ok(ProductCheck {
        n,
        m,
        samples,
        delta,
        reps,
        threshold,
        violations,
        frequency: violations as f64 / reps as f64,
        max_ratio: ratios.iter().cloned().fold(0.0, f64::max),
    })
}

/// Frequencies of `sigma_min(A) < sqrt(N)/2` and `sigma_max(A) > 3 sqrt(N)/2` for
/// `n x N` standard Gaussian `A`.
pub fn lemma_check_singular_values(
    n: usize,
    samples: usize,
    delta: f64,
    reps: usize,
    seed: u64,
) -> Result<SingularValueCheck> {
    check_delta(delta)?;
    check_reps(reps)?;
    if n == 0 {
        return Err(Error::InvalidSpec("n must be positive".into()));
    }
    let required = singular_value_min_samples(n, delta);
    if samples < required {
        return Err(Error::LemmaPrecondition { required, got: samples });
    }
    let root = (samples as f64).sqrt();
    let extremes: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream_rng(
                derive_seed(seed, &[domain::LEMMA, SINGULAR_VALUE_CHECK, rep as u64]),
                stream::EXCITATION,
            );
            let sv = linalg::singular_values(&standard_normal_matrix(&mut rng, n, samples));
            (sv.min() / root, sv.max() / root)
        })
        .collect();
    let count = |pred: &dyn Fn(&(f64, f64)) -> bool| extremes.iter().filter(|e| pred(e)).count() as f64 / reps as f64;
    Ok(SingularValueCheck {
        n,
        samples,
        delta,
        reps,
        freq_min: count(&|e| e.0 < 0.5),
        freq_max: count(&|e| e.1 > 1.5),
        mean_sigma_min_ratio: extremes.iter().map(|e| e.0).sum::<f64>() / reps as f64,
        mean_sigma_max_ratio: extremes.iter().map(|e| e.1).sum::<f64>() / reps as f64,
    })
}
