//! Data-driven LQG: the separated input law, closed-loop data collection and the
//! static LQG gain assembled from closed-loop windows.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::controller::{run_closed_loop, ClosedLoopRun, Controller, StaticGainController};
use crate::error::{Error, Result};
use crate::linalg::{self, right_solve};
use crate::rng::{derive_seed, domain, stream, stream_rng, GaussianSampler};
use crate::system::{LinearSystem, NoiseRealization};
use crate::window::{EstimationWindow, StackedEstimator};

/// `u(t) = K L_t [u(0..t-1); y(0..t)]`.
pub struct SeparatedLqg<'a> {
    k: DMatrix<f64>,
    bank: &'a dyn StackedEstimator,
    u_hist: Vec<f64>,
    y_hist: Vec<f64>,
}

impl<'a> SeparatedLqg<'a> {
    pub fn new(k: DMatrix<f64>, bank: &'a dyn StackedEstimator) -> Self {
        Self {
            k,
            bank,
            u_hist: Vec::new(),
            y_hist: Vec::new(),
        }
    }
}

impl Controller for SeparatedLqg<'_> {
    fn reset(&mut self) {
        self.u_hist.clear();
        self.y_hist.clear();
    }

    fn control(&mut self, t: usize, y: &DVector<f64>) -> Result<DVector<f64>> {
        if t > self.bank.horizon() {
            return Err(Error::shape("episode step", format!("t <= {}", self.bank.horizon()), t));
        }
        self.y_hist.extend_from_slice(y.as_slice());
        let window = EstimationWindow::new(
            t,
            DVector::from_column_slice(&self.u_hist),
            DVector::from_column_slice(&self.y_hist),
        );
        let estimate = self.bank.estimate(&window)?;
        let u = &self.k * estimate;
        self.u_hist.extend_from_slice(u.as_slice());
        Ok(u)
    }
}

/// Inputs and outputs `u(0..T)`, `y(0..T)` of one episode.
pub type Episode = ClosedLoopRun;

fn check_gain(system: &LinearSystem, k: &DMatrix<f64>, bank: &dyn StackedEstimator) -> Result<()> {
    linalg::check_shape(k, "K_lqr", system.m(), system.n())?;
    if bank.state_dim() != system.n() || bank.input_dim() != system.m() || bank.output_dim() != system.p() {
        return Err(Error::shape(
            "filter bank",
            format!("n={} m={} p={}", system.n(), system.m(), system.p()),
            format!("n={} m={} p={}", bank.state_dim(), bank.input_dim(), bank.output_dim()),
        ));
    }
    Ok(())
}

/// Episode over the bank horizon with a given initial state and noise.
pub fn run_dd_lqg_episode_with(
    system: &LinearSystem,
    k_lqr: &DMatrix<f64>,
    bank: &dyn StackedEstimator,
    x0: &DVector<f64>,
    noise: &NoiseRealization,
) -> Result<Episode> {
    check_gain(system, k_lqr, bank)?;
    if noise.horizon() > bank.horizon() {
        return Err(Error::shape(
            "noise horizon",
            format!("<= {}", bank.horizon()),
            noise.horizon(),
        ));
    }
    let mut ctrl = SeparatedLqg::new(k_lqr.clone(), bank);
    run_closed_loop(system, &mut ctrl, x0, noise)
}

/// Initial state and noise of episode seed `seed`.
pub fn episode_conditions(
    system: &LinearSystem,
    horizon: usize,
    seed: u64,
) -> Result<(DVector<f64>, NoiseRealization)> {
    let x0 = GaussianSampler::new(&system.sigma0, "Sigma0")?.sample(&mut stream_rng(seed, stream::EXCITATION));
    let noise = NoiseRealization::draw(system, horizon, seed)?;
    Ok((x0, noise))
}

/// One closed-loop episode of length `T = bank.horizon()` with `x(0) ~ N(0, Sigma0)`.
pub fn run_dd_lqg_episode(
    system: &LinearSystem,
    k_lqr: &DMatrix<f64>,
    bank: &dyn StackedEstimator,
    seed: u64,
) -> Result<Episode> {
    let (x0, noise) = episode_conditions(system, bank.horizon(), seed)?;
    run_dd_lqg_episode_with(system, k_lqr, bank, &x0, &noise)
}

/// Closed-loop input/output data of `M` episodes.
#[derive(Debug, Clone)]
pub struct ClosedLoopDataset {
    /// `u(0..T-1)` per column, `mT x M`.
    pub u: DMatrix<f64>,
    /// `y(0..T)` per column, `p(T+1) x M`.
    pub y: DMatrix<f64>,
    /// `u(T-n..T-1)`, `nm x M`.
    pub u_window: DMatrix<f64>,
    /// `y(T-n+1..T)`, `np x M`.
    pub y_window: DMatrix<f64>,
    /// `u(T)`, `m x M`.
    pub u_terminal: DMatrix<f64>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
}

impl ClosedLoopDataset {
    pub fn from_episodes(episodes: &[Episode], n: usize, seeds: Vec<u64>) -> Result<Self> {
        let first = episodes
            .first()
            .ok_or_else(|| Error::InvalidSpec("no episodes".into()))?;
        let (m, p) = (first.inputs.nrows(), first.outputs.nrows());
        let horizon = first.inputs.ncols() - 1;
        if horizon < n {
            return Err(Error::InvalidSpec(format!(
                "episode horizon {horizon} shorter than n = {n}"
            )));
        }
        let count = episodes.len();
        let mut u = DMatrix::zeros(m * horizon, count);
        let mut y = DMatrix::zeros(p * (horizon + 1), count);
        let mut u_terminal = DMatrix::zeros(m, count);
        for (i, ep) in episodes.iter().enumerate() {
            u.column_mut(i).copy_from_slice(&ep.inputs.as_slice()[..m * horizon]);
            y.column_mut(i).copy_from_slice(ep.outputs.as_slice());
            u_terminal.set_column(i, &ep.inputs.column(horizon));
        }
        let u_window = u.rows(m * (horizon - n), m * n).into_owned();
        let y_window = y.rows(p * (horizon - n + 1), p * n).into_owned();
        Ok(Self {
            u,
            y,
            u_window,
            y_window,
            u_terminal,
            seeds,
            n,
            m,
            p,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Minimum number of closed-loop episodes, `n + nm + np`.
pub fn min_episodes(system: &LinearSystem) -> usize {
    let n = system.n();
    n + n * system.m() + n * system.p()
}

pub fn closed_loop_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &[domain::CLOSED_LOOP, i as u64])
}

/// Runs `episodes` independent closed-loop episodes under the separated law.
pub fn collect_closed_loop_dataset(
    system: &LinearSystem,
    k_lqr: &DMatrix<f64>,
    bank: &dyn StackedEstimator,
    episodes: usize,
    seed: u64,
) -> Result<ClosedLoopDataset>
where
{
    let required = min_episodes(system);
    if episodes < required {
        return Err(Error::TooFewEpisodes {
            required,
            got: episodes,
        });
    }
    check_gain(system, k_lqr, bank)?;
    let seeds: Vec<u64> = (0..episodes).map(|i| closed_loop_seed(seed, i)).collect();
    let runs = seeds
        .iter()
        .map(|&s| run_dd_lqg_episode(system, k_lqr, bank, s))
        .collect::<Result<Vec<_>>>()?;
    ClosedLoopDataset::from_episodes(&runs, system.n(), seeds)
}

/// Same as [`collect_closed_loop_dataset`] but distributes episodes over the rayon pool.
pub fn collect_closed_loop_dataset_par<B>(
    system: &LinearSystem,
    k_lqr: &DMatrix<f64>,
    bank: &B,
    episodes: usize,
    seed: u64,
) -> Result<ClosedLoopDataset>
where
    B: StackedEstimator + Sync,
{
    let required = min_episodes(system);
    if episodes < required {
        return Err(Error::TooFewEpisodes {
            required,
            got: episodes,
        });
    }
    check_gain(system, k_lqr, bank)?;
    let seeds: Vec<u64> = (0..episodes).map(|i| closed_loop_seed(seed, i)).collect();
    let runs = seeds
        .par_iter()
        .map(|&s| run_dd_lqg_episode(system, k_lqr, bank, s))
        .collect::<Result<Vec<_>>>()?;
    ClosedLoopDataset::from_episodes(&runs, system.n(), seeds)
}

#[derive(Debug, Clone)]
pub struct StaticLqgGainEstimate {
    /// `m x (nm + np)`, window ordered `[u(t-n..t-1); y(t-n+1..t)]`.
    pub k: DMatrix<f64>,
    /// `||[U; Y][U_n; Y_n]^+||_2`.
    pub c4_norm: f64,
    /// Smallest singular value of `[U_n; Y_n]`.
    pub window_sigma_min: f64,
    pub n: usize,
}

/// `K_LQG = K L_T [U; Y] [U_n; Y_n]^+`, using the last gain of the bank.
pub fn lqg_gain_from_data(
    cl: &ClosedLoopDataset,
    k_lqr: &DMatrix<f64>,
    bank: &dyn StackedEstimator,
) -> Result<StaticLqgGainEstimate> {
    if bank.horizon() < cl.horizon {
        return Err(Error::shape(
            "filter bank horizon",
            format!(">= {}", cl.horizon),
            bank.horizon(),
        ));
    }
    linalg::check_shape(k_lqr, "K_lqr", cl.m, cl.n)?;
    let windows = linalg::vstack(&[&cl.u_window, &cl.y_window]);
    let rows = windows.nrows();
    let full = linalg::vstack(&[&cl.u, &cl.y]);
    let c4 = right_solve(&full, &windows)?;
    if !c4.full_row_rank(rows) {
        return Err(Error::WindowRankDeficient {
            sigma_min: c4.sigma_min,
            rows,
        });
    }
    let gain = bank.gain(cl.horizon);
    let k = k_lqr * gain * &c4.value;
    Ok(StaticLqgGainEstimate {
        k,
        c4_norm: linalg::spectral_norm(&c4.value),
        window_sigma_min: c4.sigma_min,
        n: cl.n,
    })
}

/// Deploys a static gain after `n` warm-start steps from `warm_start`.
pub fn run_static_lqg<'a>(
    gain: &DMatrix<f64>,
    order: usize,
    system: &LinearSystem,
    warm_start: Box<dyn Controller + 'a>,
    x0: &DVector<f64>,
    noise: &NoiseRealization,
) -> Result<ClosedLoopRun> {
    linalg::check_shape(gain, "K_lqg", system.m(), order * (system.m() + system.p()))?;
    let mut ctrl = StaticGainController::new(gain.clone(), order, warm_start);
    run_closed_loop(system, &mut ctrl, x0, noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{kalman_oracle, lqg_static_gain, lqr_gain, FilterKind, RecursiveLqg};
    use crate::system::CostWeights;

    fn plant() -> (LinearSystem, CostWeights) {
        (LinearSystem::benchmark(), CostWeights::benchmark())
    }

    #[test]
    fn oracle_substitution_matches_recursive_controller() {
        let (sys, w) = plant();
        let k = lqr_gain(&sys, &w).unwrap().k;
        let kf = kalman_oracle(&sys, 50).unwrap();
        for seed in 0..3 {
            let (x0, noise) = episode_conditions(&sys, 50, seed).unwrap();
            let ep = run_dd_lqg_episode_with(&sys, &k, &kf, &x0, &noise).unwrap();
            let mut rec = RecursiveLqg::new(&sys, k.clone(), FilterKind::TimeVarying);
            let reference = run_closed_loop(&sys, &mut rec, &x0, &noise).unwrap();
            assert!((ep.inputs - reference.inputs).abs().max() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_and_state_give_zero_inputs() {
        let (sys, w) = plant();
        let k = lqr_gain(&sys, &w).unwrap().k;
        let kf = kalman_oracle(&sys, 20).unwrap();
        let ep =
            run_dd_lqg_episode_with(&sys, &k, &kf, &DVector::zeros(2), &NoiseRealization::zeros(&sys, 20)).unwrap();
        assert_eq!(ep.inputs.abs().max(), 0.0);
    }

    #[test]
    fn minimum_episode_count() {
        let (sys, w) = plant();
        assert_eq!(min_episodes(&sys), 6);
        let k = lqr_gain(&sys, &w).unwrap().k;
        let kf = kalman_oracle(&sys, 10).unwrap();
        assert!(matches!(
            collect_closed_loop_dataset(&sys, &k, &kf, 5, 0),
            Err(Error::TooFewEpisodes { required: 6, got: 5 })
        ));
        let cl = collect_closed_loop_dataset(&sys, &k, &kf, 6, 0).unwrap();
        assert_eq!(cl.u.shape(), (10, 6));
        assert_eq!(cl.y.shape(), (11, 6));
    }

    #[test]
    fn closed_loop_windows_and_replay() {
        let (sys, w) = plant();
        let k = lqr_gain(&sys, &w).unwrap().k;
        let kf = kalman_oracle(&sys, 12).unwrap();
        let a = collect_closed_loop_dataset(&sys, &k, &kf, 8, 4).unwrap();
        let b = collect_closed_loop_dataset_par(&sys, &k, &kf, 8, 4).unwrap();
        assert_eq!(a.u, b.u);
        assert_eq!(a.y, b.y);
        let ep = run_dd_lqg_episode(&sys, &k, &kf, a.seeds[3]).unwrap();
        // inputs T-n..T-1 = 10, 11 ; outputs T-n+1..T = 11, 12
        assert_eq!(a.u_window[(0, 3)], ep.inputs[(0, 10)]);
        assert_eq!(a.u_window[(1, 3)], ep.inputs[(0, 11)]);
        assert_eq!(a.y_window[(0, 3)], ep.outputs[(0, 11)]);
        assert_eq!(a.y_window[(1, 3)], ep.outputs[(0, 12)]);
        assert_eq!(a.u_terminal[(0, 3)], ep.inputs[(0, 12)]);
    }

    #[test]
    fn oracle_assembly_recovers_static_gain() {
        let (sys, w) = plant();
        let k = lqr_gain(&sys, &w).unwrap().k;
        let kf = kalman_oracle(&sys, 50).unwrap();
        let cl = collect_closed_loop_dataset(&sys, &k, &kf, 40, 9).unwrap();
        let est = lqg_gain_from_data(&cl, &k, &kf).unwrap();
        assert_eq!(est.k.shape(), (1, 4));
        let exact = lqg_static_gain(&sys, &w).unwrap();
        assert!((&est.k - &exact.k).abs().max() < 1e-6, "{} vs {}", est.k, exact.k);
        assert!(est.c4_norm.is_finite());
    }

    #[test]
    fn static_law_with_zero_signals_stays_zero() {
        let (sys, w) = plant();
        let exact = lqg_static_gain(&sys, &w).unwrap();
        let k = lqr_gain(&sys, &w).unwrap().k;
        let warm = Box::new(RecursiveLqg::new(&sys, k, FilterKind::TimeVarying));
        let run = run_static_lqg(
            &exact.k,
            2,
            &sys,
            warm,
            &DVector::zeros(2),
            &NoiseRealization::zeros(&sys, 100),
        )
        .unwrap();
        assert_eq!(run.inputs.abs().max(), 0.0);
    }

    #[test]
    fn causality_under_future_noise_perturbation() {
        let (sys, w) = plant();
        let k = lqr_gain(&sys, &w).unwrap().k;
        let kf = kalman_oracle(&sys, 30).unwrap();
        let (x0, noise) = episode_conditions(&sys, 30, 5).unwrap();
        let base = run_dd_lqg_episode_with(&sys, &k, &kf, &x0, &noise).unwrap();
        let cut = 17;
        let mut perturbed = noise.clone();
        for t in cut..30 {
            perturbed.process[(0, t)] += 3.0;
        }
        for t in cut + 1..=30 {
            perturbed.measurement[(0, t)] -= 2.0;
        }
        let other = run_dd_lqg_episode_with(&sys, &k, &kf, &x0, &perturbed).unwrap();
        assert_eq!(base.inputs.columns(0, cut + 1), other.inputs.columns(0, cut + 1));
        assert_ne!(base.inputs.column(cut + 1), other.inputs.column(cut + 1));
    }
}
