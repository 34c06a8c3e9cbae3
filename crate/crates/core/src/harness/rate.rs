//! Least-squares fits of `log(value) = intercept + slope * log(N)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// Natural-log intercept.
    pub intercept: f64,
    /// 95% half-width of the slope; absent with fewer than three points.
    pub half_width: Option<f64>,
    pub points: usize,
}

impl RateFit {
    /// True when the 95% interval lies strictly below zero.
    pub fn negative_with_confidence(&self) -> bool {
        matches!(self.half_width, Some(h) if self.slope + h < 0.0)
    }

    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.slope >= lo && self.slope <= hi
    }
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Fits a power law to `(N, value)` pairs on log-log axes.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    for &(n, v) in points {
        if !(n > 0.0 && n.is_finite()) || !(v > 0.0 && v.is_finite()) {
            return Err(Error::RateFit(format!("point ({n}, {v}) is not positive and finite")));
        }
    }
    let k = points.len();
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let x_mean = xs.iter().sum::<f64>() / k.max(1) as f64;
    let y_mean = ys.iter().sum::<f64>() / k.max(1) as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if k < 2 || sxx == 0.0 {
        return Err(Error::RateFit(format!(
            "slope undefined: {k} point(s) over fewer than two distinct N"
        )));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let half_width = if k > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let se = (ssr / (k - 2) as f64 / sxx).sqrt();
        Some(t_quantile_975(k - 2) * se)
    } else {
        None
    };
    Ok(RateFit {
        slope,
        intercept,
        half_width,
        points: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [1e2, 1e3, 1e4, 1e5].iter().map(|&n: &f64| (n, n.powf(-0.5))).collect();
        let fit = fit_rate(&pts).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-10);
        assert!(fit.half_width.unwrap() < 1e-10);
    }

    #[test]
    fn constant_has_zero_slope() {
        let pts = [(100.0, 3.0), (1000.0, 3.0), (10000.0, 3.0)];
        let fit = fit_rate(&pts).unwrap();
        assert!(fit.slope.abs() < 1e-12);
        assert!(!fit.negative_with_confidence());
    }

    #[test]
    fn degenerate_grids_are_rejected() {
        assert!(fit_rate(&[(100.0, 1.0)]).is_err());
        assert!(fit_rate(&[(100.0, 1.0), (100.0, 2.0)]).is_err());
        assert!(fit_rate(&[(100.0, 0.0), (1000.0, 2.0)]).is_err());
        let two = fit_rate(&[(100.0, 1.0), (1000.0, 0.1)]).unwrap();
        assert!((two.slope + 1.0).abs() < 1e-12);
        assert!(two.half_width.is_none());
    }

    #[test]
    fn quantile_values() {
        assert!((t_quantile_975(1) - 12.706).abs() < 1e-3);
        assert!((t_quantile_975(58) - 2.0017).abs() < 1e-3);
    }
}
