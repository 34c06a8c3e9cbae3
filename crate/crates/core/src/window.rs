//! Stacked input/output histories and the estimators that consume them.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `u(0..t-1)` and `y(0..t)` stacked chronologically.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationWindow {
    pub t: usize,
    pub u_hist: DVector<f64>,
    pub y_hist: DVector<f64>,
}

impl EstimationWindow {
    pub fn new(t: usize, u_hist: DVector<f64>, y_hist: DVector<f64>) -> Self {
        Self { t, u_hist, y_hist }
    }

    /// Window at time `t` cut from full input (`m x >=t`) and output (`p x >=t+1`) records.
    pub fn from_records(t: usize, inputs: &DMatrix<f64>, outputs: &DMatrix<f64>) -> Self {
        let (m, p) = (inputs.nrows(), outputs.nrows());
        let u_hist = DVector::from_column_slice(&inputs.as_slice()[..m * t]);
        let y_hist = DVector::from_column_slice(&outputs.as_slice()[..p * (t + 1)]);
        Self { t, u_hist, y_hist }
    }

    pub fn zeros(t: usize, m: usize, p: usize) -> Self {
        Self::new(t, DVector::zeros(m * t), DVector::zeros(p * (t + 1)))
    }

    pub fn check(&self, m: usize, p: usize) -> Result<()> {
        if self.u_hist.len() != m * self.t {
            return Err(Error::shape(
                "window.u_hist",
                format!("length {}", m * self.t),
                format!("length {}", self.u_hist.len()),
            ));
        }
        if self.y_hist.len() != p * (self.t + 1) {
            return Err(Error::shape(
                "window.y_hist",
                format!("length {}", p * (self.t + 1)),
                format!("length {}", self.y_hist.len()),
            ));
        }
        Ok(())
    }

    /// `[u_hist; y_hist]`.
    pub fn stacked(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.u_hist.len() + self.y_hist.len());
        z.rows_mut(0, self.u_hist.len()).copy_from(&self.u_hist);
        z.rows_mut(self.u_hist.len(), self.y_hist.len()).copy_from(&self.y_hist);
        z
    }
}

/// A bank of per-time linear estimators `x_hat(t) = L_t [u(0..t-1); y(0..t)]`.
pub trait StackedEstimator {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// Last time index with a gain.
    fn horizon(&self) -> usize;
    fn gain(&self, t: usize) -> &DMatrix<f64>;

    fn estimate(&self, window: &EstimationWindow) -> Result<DVector<f64>> {
        if window.t > self.horizon() {
            return Err(Error::shape("window.t", format!("t <= {}", self.horizon()), window.t));
        }
        window.check(self.input_dim(), self.output_dim())?;
        Ok(self.gain(window.t) * window.stacked())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_cut_from_records() {
        let inputs = DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0]);
        let outputs = DMatrix::from_row_slice(1, 5, &[10.0, 20.0, 30.0, 40.0, 50.0]);
        let w = EstimationWindow::from_records(2, &inputs, &outputs);
        assert_eq!(w.u_hist.as_slice(), &[1.0, 2.0]);
        assert_eq!(w.y_hist.as_slice(), &[10.0, 20.0, 30.0]);
        assert_eq!(w.stacked().as_slice(), &[1.0, 2.0, 10.0, 20.0, 30.0]);
        let w0 = EstimationWindow::from_records(0, &inputs, &outputs);
        assert!(w0.u_hist.is_empty());
        assert!(w0.check(1, 1).is_ok());
        assert!(w0.check(2, 1).is_ok());
        assert!(w.check(2, 1).is_err());
    }
}
