//! Causal output-feedback controllers and the closed-loop simulator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::system::{LinearSystem, NoiseRealization};

/// Closed-loop runs abort once the state norm exceeds this value.
pub const DIVERGENCE_NORM: f64 = 1e9;

/// A causal controller: at every step it sees `y(t)` and returns `u(t)`.
///
/// Implementations remember their own past inputs and outputs.
pub trait Controller {
    fn reset(&mut self);
    fn control(&mut self, t: usize, y: &DVector<f64>) -> Result<DVector<f64>>;
}

/// `u = 0`.
#[derive(Debug, Clone)]
pub struct ZeroController {
    pub m: usize,
}

impl Controller for ZeroController {
    fn reset(&mut self) {}

    fn control(&mut self, _t: usize, _y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::zeros(self.m))
    }
}

/// Inputs `m x (T+1)`, states `n x (T+1)` and outputs `p x (T+1)` of a closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub inputs: DMatrix<f64>,
    pub states: DMatrix<f64>,
    pub outputs: DMatrix<f64>,
}

impl ClosedLoopRun {
    /// `(1/T) sum_{t<T} x'Qx + u'Ru`.
    pub fn running_cost(&self, q_x: &DMatrix<f64>, r_u: &DMatrix<f64>, horizon: usize) -> f64 {
        let mut total = 0.0;
        for t in 0..horizon {
            let x = self.states.column(t);
            let u = self.inputs.column(t);
            total += (x.transpose() * q_x * x)[(0, 0)] + (u.transpose() * r_u * u)[(0, 0)];
        }
        total / horizon as f64
    }
}

/// Runs `controller` against the plant for `noise.horizon()` steps.
///
/// The controller is asked for `u(0), ..., u(T)`; the last input only matters to callers
/// that inspect it.
pub fn run_closed_loop(
    system: &LinearSystem,
    controller: &mut dyn Controller,
    x0: &DVector<f64>,
    noise: &NoiseRealization,
) -> Result<ClosedLoopRun> {
    let horizon = noise.horizon();
    let (n, m, p) = (system.n(), system.m(), system.p());
    if x0.len() != n {
        return Err(Error::shape(
            "x0",
            format!("length {n}"),
            format!("length {}", x0.len()),
        ));
    }
    controller.reset();
    let mut inputs = DMatrix::zeros(m, horizon + 1);
    let mut states = DMatrix::zeros(n, horizon + 1);
    let mut outputs = DMatrix::zeros(p, horizon + 1);
    let mut x = x0.clone();
    for t in 0..=horizon {
        let norm = x.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Instability { step: t, norm });
        }
        let y = &system.c * &x + noise.measurement.column(t);
        let u = controller.control(t, &y)?;
        if u.len() != m {
            return Err(Error::shape(
                "controller output",
                format!("length {m}"),
                format!("length {}", u.len()),
            ));
        }
        states.set_column(t, &x);
        outputs.set_column(t, &y);
        inputs.set_column(t, &u);
        if t < horizon {
            x = &system.a * &x + &system.b * &u + noise.process.column(t);
        }
    }
    Ok(ClosedLoopRun {
        inputs,
        states,
        outputs,
    })
}

/// Applies `u(t) = K [u(t-n..t-1); y(t-n+1..t)]` once `t >= n`; earlier inputs come from
/// the warm-start controller.
pub struct StaticGainController<'a> {
    gain: DMatrix<f64>,
    order: usize,
    warm_start: Box<dyn Controller + 'a>,
    u_hist: Vec<DVector<f64>>,
    y_hist: Vec<DVector<f64>>,
}

impl<'a> StaticGainController<'a> {
    pub fn new(gain: DMatrix<f64>, order: usize, warm_start: Box<dyn Controller + 'a>) -> Self {
        Self {
            gain,
            order,
            warm_start,
            u_hist: Vec::new(),
            y_hist: Vec::new(),
        }
    }

    /// `[u(t-n..t-1); y(t-n+1..t)]` from the recorded history (requires `t >= n`).
    fn window(&self, t: usize) -> DVector<f64> {
        let n = self.order;
        let m = self.u_hist[0].len();
        let p = self.y_hist[0].len();
        let mut w = DVector::zeros(n * (m + p));
        for k in 0..n {
            w.rows_mut(k * m, m).copy_from(&self.u_hist[t - n + k]);
            w.rows_mut(n * m + k * p, p).copy_from(&self.y_hist[t - n + 1 + k]);
        }
        w
    }
}

impl Controller for StaticGainController<'_> {
    fn reset(&mut self) {
        self.warm_start.reset();
        self.u_hist.clear();
        self.y_hist.clear();
    }

    fn control(&mut self, t: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.y_hist.push(y.clone());
        let u = if t < self.order {
            self.warm_start.control(t, y)?
        } else {
            &self.gain * self.window(t)
        };
        self.u_hist.push(u.clone());
        Ok(u)
    }
}
