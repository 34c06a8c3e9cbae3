//! Model-based ground truth: Riccati LQR, Kalman filters, the static LQG gain and
//! Monte Carlo cost evaluation. Nothing in the data-driven path calls into this module.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::controller::{run_closed_loop, Controller};
use crate::error::{Error, Result};
use crate::linalg::{self, pinv, psd_sqrt};
use crate::rng::{derive_seed, domain, stream, stream_rng, GaussianSampler};
use crate::system::{CostWeights, LinearSystem, NoiseRealization};
use crate::window::StackedEstimator;

/// Successive-iterate Frobenius tolerance of the fixed-point Riccati solvers.
pub const RICCATI_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub p: DMatrix<f64>,
    pub iterations: usize,
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::AssumptionViolation(format!("{what} is singular")))
}

/// One value-iteration step `Q + A'PA - A'PB (R + B'PB)^-1 B'PA`.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let at_p = a.transpose() * p;
    let s = r + b.transpose() * p * b;
    let gain_term = &at_p * b * invert(&s, "R + B'PB")? * b.transpose() * p * a;
    Ok(linalg::symmetrize(&(q + &at_p * a - gain_term)))
}

/// `||P - riccati_step(P)||_F`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<f64> {
    Ok((p - riccati_step(a, b, q, r, p)?).norm())
}

/// Discrete algebraic Riccati equation by value iteration from `P_0 = Q`.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<RiccatiSolution> {
    solve_dare_from(a, b, q, r, q.clone())
}

fn solve_dare_from(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    start: DMatrix<f64>,
) -> Result<RiccatiSolution> {
    let mut p = start;
    let mut step = f64::INFINITY;
    for it in 1..=RICCATI_MAX_ITER {
        let next = riccati_step(a, b, q, r, &p)?;
        step = (&next - &p).norm();
        p = next;
        if !step.is_finite() {
            break;
        }
        if step < RICCATI_TOL * (1.0 + p.norm()).max(1.0) {
            return Ok(RiccatiSolution { p, iterations: it });
        }
    }
    Err(Error::RiccatiDivergence {
        iterations: RICCATI_MAX_ITER,
        step,
    })
}

fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut blocks = Vec::with_capacity(n);
    let mut cur = b.clone();
    for _ in 0..n {
        let next = a * &cur;
        blocks.push(cur);
        cur = next;
    }
    let refs: Vec<&DMatrix<f64>> = blocks.iter().collect();
    linalg::hstack(&refs)
}

pub fn is_controllable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    linalg::rank(&controllability_matrix(a, b)) == a.nrows()
}

pub fn is_observable(a: &DMatrix<f64>, c: &DMatrix<f64>) -> bool {
    is_controllable(&a.transpose(), &c.transpose())
}

/// Stationary LQR gain with the convention `u = K x`.
#[derive(Debug, Clone)]
pub struct LqrOracle {
    pub k: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub iterations: usize,
}

pub fn lqr_gain(system: &LinearSystem, weights: &CostWeights) -> Result<LqrOracle> {
    weights.check_against(system)?;
    if !is_controllable(&system.a, &system.b) {
        return Err(Error::AssumptionViolation("(A, B) is not controllable".into()));
    }
    let q_half = psd_sqrt(&weights.q_x, "Q_x")?;
    if !is_observable(&system.a, &q_half) {
        return Err(Error::AssumptionViolation("(A, Q_x^1/2) is not observable".into()));
    }
    let sol = solve_dare(&system.a, &system.b, &weights.q_x, &weights.r_u)?;
    let k = gain_from_cost_to_go(system, weights, &sol.p)?;
    Ok(LqrOracle {
        k,
        p: sol.p,
        iterations: sol.iterations,
    })
}

/// `-(R + B'PB)^-1 B'PA`.
fn gain_from_cost_to_go(system: &LinearSystem, weights: &CostWeights, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let b = &system.b;
    let s = &weights.r_u + b.transpose() * p * b;
    Ok(-invert(&s, "R + B'PB")? * b.transpose() * p * &system.a)
}

/// Optimal noise-free input `m x T` and state `n x (T+1)` trajectories of the
/// finite-horizon problem with cost `sum_{t<=T} x'Qx + sum_{t<T} u'Ru`.
pub fn finite_horizon_lqr(
    system: &LinearSystem,
    weights: &CostWeights,
    horizon: usize,
    x0: &DVector<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    weights.check_against(system)?;
    let mut gains = vec![DMatrix::zeros(system.m(), system.n()); horizon];
    let mut p = weights.q_x.clone();
    for t in (0..horizon).rev() {
        let k = gain_from_cost_to_go(system, weights, &p)?;
        let closed = &system.a + &system.b * &k;
        p = linalg::symmetrize(&(&weights.q_x + closed.transpose() * &p * &closed + k.transpose() * &weights.r_u * &k));
        gains[t] = k;
    }
    let mut u = DMatrix::zeros(system.m(), horizon);
    let mut x = DMatrix::zeros(system.n(), horizon + 1);
    x.set_column(0, x0);
    for (t, gain) in gains.iter().enumerate() {
        let ut = gain * x.column(t);
        let next = &system.a * x.column(t) + &system.b * &ut;
        u.set_column(t, &ut);
        x.set_column(t + 1, &next);
    }
    Ok((u, x))
}

/// Noise-free state trajectory `n x (T+1)` under `u = K x`.
pub fn feedback_trajectory(system: &LinearSystem, k: &DMatrix<f64>, horizon: usize, x0: &DVector<f64>) -> DMatrix<f64> {
    let closed = &system.a + &system.b * k;
    let mut x = DMatrix::zeros(system.n(), horizon + 1);
    x.set_column(0, x0);
    for t in 0..horizon {
        let next = &closed * x.column(t);
        x.set_column(t + 1, &next);
    }
    x
}

/// Time-varying Kalman filter from `x(0) ~ N(0, Sigma0)` in stacked-gain form.
#[derive(Debug, Clone)]
pub struct KalmanOracle {
    /// `L_t^KF`, `n x (mt + p(t+1))`, for `t = 0..=T`.
    pub gains: Vec<DMatrix<f64>>,
    /// Posterior error covariances `Sigma_{e,t}`.
    pub error_covariances: Vec<DMatrix<f64>>,
    /// Measurement-update gains of the recursive form, `n x p`.
    pub update_gains: Vec<DMatrix<f64>>,
    m: usize,
    p: usize,
}

impl KalmanOracle {
    /// `L_t^u` (first `mt` columns).
    pub fn input_block(&self, t: usize) -> DMatrix<f64> {
        self.gains[t].columns(0, self.m * t).into_owned()
    }

    /// `L_t^y` (last `p(t+1)` columns).
    pub fn output_block(&self, t: usize) -> DMatrix<f64> {
        self.gains[t].columns(self.m * t, self.p * (t + 1)).into_owned()
    }
}

impl StackedEstimator for KalmanOracle {
    fn state_dim(&self) -> usize {
        self.gains[0].nrows()
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

fn update_gain(system: &LinearSystem, prior: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let c = &system.c;
    let s = c * prior * c.transpose() + &system.r_v;
    Ok(prior * c.transpose() * invert(&s, "C Sigma C' + R_v")?)
}

pub fn kalman_oracle(system: &LinearSystem, horizon: usize) -> Result<KalmanOracle> {
    system.validate()?;
    let (n, m, p) = (system.n(), system.m(), system.p());
    let ident = DMatrix::<f64>::identity(n, n);
    let mut gains = Vec::with_capacity(horizon + 1);
    let mut covs = Vec::with_capacity(horizon + 1);
    let mut updates = Vec::with_capacity(horizon + 1);

    let mut prior = system.sigma0.clone();
    let mut l = update_gain(system, &prior)?;
    let mut gu = DMatrix::zeros(n, 0);
    let mut gy = l.clone();
    let mut post = linalg::symmetrize(&((&ident - &l * &system.c) * &prior));
    gains.push(linalg::hstack(&[&gu, &gy]));
    covs.push(post.clone());
    updates.push(l.clone());

    for _ in 1..=horizon {
        prior = linalg::symmetrize(&(&system.a * &post * system.a.transpose() + &system.q_w));
        l = update_gain(system, &prior)?;
        let il = &ident - &l * &system.c;
        let ila = &il * &system.a;
        gu = linalg::hstack(&[&(&ila * &gu), &(&il * &system.b)]);
        gy = linalg::hstack(&[&(&ila * &gy), &l]);
        post = linalg::symmetrize(&(&il * &prior));
        gains.push(linalg::hstack(&[&gu, &gy]));
        covs.push(post.clone());
        updates.push(l.clone());
    }
    Ok(KalmanOracle {
        gains,
        error_covariances: covs,
        update_gains: updates,
        m,
        p,
    })
}

/// Stationary filter `x_hat(t+1) = (I - LC)(A x_hat + B u) + L y(t+1)`.
#[derive(Debug, Clone)]
pub struct SteadyStateKalman {
    /// `n x p` measurement-update gain.
    pub gain: DMatrix<f64>,
    /// Steady a-priori error covariance.
    pub prior_covariance: DMatrix<f64>,
}

pub fn steady_state_kalman(system: &LinearSystem) -> Result<SteadyStateKalman> {
    system.validate()?;
    // filter Riccati is the control Riccati of the dual pair (A', C')
    let sol = solve_dare_from(
        &system.a.transpose(),
        &system.c.transpose(),
        &system.q_w,
        &system.r_v,
        system.sigma0.clone(),
    )?;
    let gain = update_gain(system, &sol.p)?;
    Ok(SteadyStateKalman {
        gain,
        prior_covariance: sol.p,
    })
}

/// Which filter a recursive LQG controller runs.
#[derive(Debug, Clone)]
pub enum FilterKind {
    /// Time-varying filter initialised at `Sigma0`.
    TimeVarying,
    /// Fixed measurement-update gain.
    SteadyState(DMatrix<f64>),
}

/// `u(t) = K x_hat(t)` with a recursive Kalman filter.
#[derive(Debug, Clone)]
pub struct RecursiveLqg {
    system: LinearSystem,
    k: DMatrix<f64>,
    filter: FilterKind,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    last_estimate: Option<DVector<f64>>,
}

impl RecursiveLqg {
    pub fn new(system: &LinearSystem, k: DMatrix<f64>, filter: FilterKind) -> Self {
        Self {
            system: system.clone(),
            k,
            filter,
            prior_mean: DVector::zeros(system.n()),
            prior_cov: system.sigma0.clone(),
            last_estimate: None,
        }
    }

    pub fn last_estimate(&self) -> Option<&DVector<f64>> {
        self.last_estimate.as_ref()
    }
}

impl Controller for RecursiveLqg {
    fn reset(&mut self) {
        self.prior_mean = DVector::zeros(self.system.n());
        self.prior_cov = self.system.sigma0.clone();
        self.last_estimate = None;
    }

    fn control(&mut self, _t: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
        let sys = &self.system;
        let l = match &self.filter {
            FilterKind::TimeVarying => update_gain(sys, &self.prior_cov)?,
            FilterKind::SteadyState(l) => l.clone(),
        };
        let innovation = y - &sys.c * &self.prior_mean;
        let estimate = &self.prior_mean + &l * innovation;
        let u = &self.k * &estimate;
        if let FilterKind::TimeVarying = self.filter {
            let n = sys.n();
            let post = (DMatrix::<f64>::identity(n, n) - &l * &sys.c) * &self.prior_cov;
            self.prior_cov = linalg::symmetrize(&(&sys.a * post * sys.a.transpose() + &sys.q_w));
        }
        self.prior_mean = &sys.a * &estimate + &sys.b * &u;
        self.last_estimate = Some(estimate);
        Ok(u)
    }
}

/// Static output-feedback LQG law `u(t+n) = K [u(t..t+n-1); y(t+1..t+n)]`.
#[derive(Debug, Clone)]
pub struct StaticLqgGain {
    pub k: DMatrix<f64>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// Smallest singular value of the window observability matrix.
    pub window_sigma_min: f64,
}

/// Builds the static LQG gain from the stationary filter and LQR gain.
///
/// With `F = (I - LC)(A + BK)` the closed-loop estimate obeys
/// `x_hat(t+1) = F x_hat(t) + L y(t+1)`, so the inputs in a window satisfy
/// `u_win = O x_hat(t) + G y_win` with `O = [K; KF; ...; KF^(n-1)]`. Solving for
/// `x_hat(t)` with `O^+` and propagating `n` steps gives `x_hat(t+n)` and therefore
/// `u(t+n) = K x_hat(t+n)` as a linear function of the window.
pub fn lqg_static_gain(system: &LinearSystem, weights: &CostWeights) -> Result<StaticLqgGain> {
    let lqr = lqr_gain(system, weights)?;
    let kf = steady_state_kalman(system)?;
    static_gain_from_parts(system, &lqr.k, &kf.gain)
}

pub fn static_gain_from_parts(system: &LinearSystem, k: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<StaticLqgGain> {
    let (n, m, p) = (system.n(), system.m(), system.p());
    let ident = DMatrix::<f64>::identity(n, n);
    let f = (&ident - l * &system.c) * (&system.a + &system.b * k);
    let mut powers = vec![ident.clone()];
    for j in 1..=n {
        let next = &f * &powers[j - 1];
        powers.push(next);
    }
    let mut obs = DMatrix::zeros(n * m, n);
    let mut gamma = DMatrix::zeros(n * m, n * p);
    let mut psi = DMatrix::zeros(n, n * p);
    for row in 0..n {
        obs.view_mut((row * m, 0), (m, n)).copy_from(&(k * &powers[row]));
        for j in 0..row {
            gamma
                .view_mut((row * m, j * p), (m, p))
                .copy_from(&(k * &powers[row - 1 - j] * l));
        }
    }
    for j in 0..n {
        psi.view_mut((0, j * p), (n, p)).copy_from(&(&powers[n - 1 - j] * l));
    }
    let obs_pinv = pinv(&obs);
    if obs_pinv.rank < n {
        return Err(Error::DegenerateRealization {
            sigma_min: obs_pinv.sigma_min,
        });
    }
    let propagate = &powers[n] * &obs_pinv.matrix;
    let k_u = k * &propagate;
    let k_y = k * (&psi - &propagate * &gamma);
    Ok(StaticLqgGain {
        k: linalg::hstack(&[&k_u, &k_y]),
        n,
        m,
        p,
        window_sigma_min: obs_pinv.sigma_min,
    })
}

/// How episodes used for cost evaluation are initialised.
#[derive(Debug, Clone)]
pub enum InitialState {
    /// `x(0) ~ N(0, Sigma0)` drawn per repetition.
    Random,
    Fixed(DVector<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub reps: usize,
}

/// Monte Carlo average of `(1/T) sum x'Qx + u'Ru` over independent closed-loop runs.
///
/// `make_controller` is called once per repetition; repetitions run in parallel and are
/// reduced in index order.
pub fn evaluate_lqg_cost<'a, F>(
    system: &LinearSystem,
    weights: &CostWeights,
    make_controller: F,
    horizon: usize,
    reps: usize,
    initial: &InitialState,
    seed: u64,
) -> Result<CostEstimate>
where
    F: Fn() -> Box<dyn Controller + 'a> + Sync,
{
    if horizon == 0 || reps == 0 {
        return Err(Error::InvalidSpec(
            "cost evaluation needs T_eval > 0 and reps > 0".into(),
        ));
    }
    weights.check_against(system)?;
    let x0_sampler = GaussianSampler::new(&system.sigma0, "Sigma0")?;
    let costs = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive_seed(seed, &[domain::COST, rep as u64]);
            let x0 = match initial {
                InitialState::Random => x0_sampler.sample(&mut stream_rng(rep_seed, stream::EXCITATION)),
                InitialState::Fixed(x0) => x0.clone(),
            };
            let noise = NoiseRealization::draw(system, horizon, rep_seed)?;
            let mut controller = make_controller();
            let run = run_closed_loop(system, controller.as_mut(), &x0, &noise)?;
            Ok(run.running_cost(&weights.q_x, &weights.r_u, horizon))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = costs.iter().sum::<f64>() / reps as f64;
    let std_err = if reps > 1 {
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        (var / reps as f64).sqrt()
    } else {
        0.0
    };
    Ok(CostEstimate { mean, std_err, reps })
}
