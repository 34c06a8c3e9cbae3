//! Monte Carlo convergence experiments over a grid of dataset sizes.
//!
//! Every `(N, rep)` cell draws one open-loop dataset and evaluates the requested panels on it:
//!
//! * a: `||K_lqr_d - K_lqr||_2`
//! * b: `||L_t^D - L_t^KF||_2` at `t = T` (or the max over `t`)
//! * c: `max_t ||x_hat_d(t) - x_hat_kf(t)||` on a fresh test trajectory
//! * d: `||u_dlqg - u_lqg||` over `t = 0..T` under a shared noise realization
//! * e: `||K_lqg_d - K_lqg||_2`

pub mod lemmas;
pub mod rate;
pub mod report;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::controller::run_closed_loop;
use crate::dd_kalman::{filter_bank_from_data, DataFilterBank};
use crate::dd_lqg::{collect_closed_loop_dataset, episode_conditions, lqg_gain_from_data, run_dd_lqg_episode_with};
use crate::dd_lqr::{canonical_initial_states, lqr_gain_from_data};
use crate::error::{Error, Result};
use crate::linalg;
use crate::oracle::{
    finite_horizon_lqr, kalman_oracle, lqg_static_gain, lqr_gain, FilterKind, KalmanOracle, RecursiveLqg,
};
use crate::rng::{derive_seed, domain};
use crate::system::{
    generate_open_loop_dataset, replay_open_loop_trajectory, CostWeights, ExperimentInputSpec, LinearSystem,
    NoiseRealization,
};
use crate::window::{EstimationWindow, StackedEstimator};

pub use report::{Cell, CellDiagnostics, ConvergenceReport, Panel, PanelSummary, ReportFormat};

/// Which filter time panel (b) reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterTime {
    Terminal,
    MaxOverT,
}

/// How panel (c) aggregates the per-time estimation errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateAggregate {
    Max,
    Terminal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelOptions {
    pub filter_time: FilterTime,
    pub state_aggregate: StateAggregate,
    /// Panel (d) runs both controllers on the same noise realization when true.
    pub paired_noise: bool,
    /// Closed-loop episodes `M` collected for panel (e).
    pub closed_loop_episodes: usize,
    /// Initial states for the data-driven LQR gain; `None` means the canonical basis.
    pub lqr_initial_states: Option<Vec<DVector<f64>>>,
}

impl Default for PanelOptions {
    fn default() -> Self {
        Self {
            filter_time: FilterTime::Terminal,
            state_aggregate: StateAggregate::Max,
            paired_noise: true,
            closed_loop_episodes: 50,
            lqr_initial_states: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub system: LinearSystem,
    pub weights: CostWeights,
    pub sigma_u: DMatrix<f64>,
    pub horizon: usize,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub panels: Vec<Panel>,
    pub seed: u64,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub options: PanelOptions,
}

impl ExperimentConfig {
    /// The example plant with `T = 50`, `N in {1e2, 1e3, 1e4}`, 20 repetitions and all panels.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            system: LinearSystem::benchmark(),
            weights: CostWeights::benchmark(),
            sigma_u: DMatrix::identity(1, 1),
            horizon: 50,
            n_grid: vec![100, 1_000, 10_000],
            repetitions: 20,
            panels: Panel::ALL.to_vec(),
            seed,
            workers: 0,
            options: PanelOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.weights.check_against(&self.system)?;
        ExperimentInputSpec::new(self.sigma_u.clone(), self.horizon, 1, self.seed)?;
        if self.n_grid.is_empty() {
            return Err(Error::Config("N grid is empty".into()));
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_grid[0] == 0 {
            return Err(Error::Config(format!(
                "N grid must be strictly increasing and positive: {:?}",
                self.n_grid
            )));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.panels.is_empty() {
            return Err(Error::Config("no panels requested".into()));
        }
        if let Some(x0s) = &self.options.lqr_initial_states {
            if x0s.is_empty() || x0s.iter().any(|x| x.len() != self.system.n()) {
                return Err(Error::Config(format!(
                    "LQR initial states must be a non-empty list of {}-vectors",
                    self.system.n()
                )));
            }
        }
        if self.wants(Panel::E) && self.options.closed_loop_episodes == 0 {
            return Err(Error::Config("panel e needs closed-loop episodes".into()));
        }
        Ok(())
    }

    fn wants(&self, panel: Panel) -> bool {
        self.panels.contains(&panel)
    }

    fn initial_states(&self) -> Vec<DVector<f64>> {
        self.options
            .lqr_initial_states
            .clone()
            .unwrap_or_else(|| canonical_initial_states(self.system.n()))
    }
}

/// Model-based quantities every cell is compared against.
struct Oracles {
    k_lqr: DMatrix<f64>,
    kalman: KalmanOracle,
    k_lqg: DMatrix<f64>,
    lqr_reference: Vec<DMatrix<f64>>,
}

fn build_oracles(cfg: &ExperimentConfig, x0s: &[DVector<f64>]) -> Result<Oracles> {
    let lqr = lqr_gain(&cfg.system, &cfg.weights)?;
    let kalman = kalman_oracle(&cfg.system, cfg.horizon)?;
    let k_lqg = if cfg.wants(Panel::E) {
        lqg_static_gain(&cfg.system, &cfg.weights)?.k
    } else {
        DMatrix::zeros(0, 0)
    };
    let lqr_reference = x0s
        .iter()
        .map(|x0| finite_horizon_lqr(&cfg.system, &cfg.weights, cfg.horizon, x0).map(|(_, x)| x))
        .collect::<Result<Vec<_>>>()?;
    Ok(Oracles {
        k_lqr: lqr.k,
        kalman,
        k_lqg,
        lqr_reference,
    })
}

const PANEL_TEST: u64 = 1;
const PANEL_EPISODE: u64 = 2;
const PANEL_CLOSED_LOOP: u64 = 3;

/// Seed of cell `(N, rep)`; panels derive their own sub-seeds from it.
pub fn cell_seed(master: u64, n: usize, rep: usize) -> u64 {
    derive_seed(master, &[domain::HARNESS, n as u64, rep as u64])
}

struct CellOutput {
    cells: Vec<Cell>,
    diagnostics: CellDiagnostics,
}

/// Status of a failed cell, named after the error that caused it.
struct Failure(&'static str);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        log::debug!("{e}");
        Failure(e.kind())
    }
}

fn upstream<T>(r: &Result<T>) -> std::result::Result<&T, Failure> {
    r.as_ref().map_err(|e| Failure(e.kind()))
}

fn record<F>(cells: &mut Vec<Cell>, panel: Panel, n: usize, rep: usize, f: F)
where
    F: FnOnce() -> std::result::Result<f64, Failure>,
{
    cells.push(match f() {
        Ok(v) => Cell::ok(panel, n, rep, v),
        Err(Failure(kind)) => Cell::failed(panel, n, rep, kind),
    });
}

fn filter_errors(bank: &DataFilterBank, oracle: &KalmanOracle) -> (f64, f64) {
    let horizon = bank.horizon();
    let terminal = linalg::spectral_norm(&(bank.gain(horizon) - oracle.gain(horizon)));
    let max = (0..=horizon)
        .map(|t| linalg::spectral_norm(&(bank.gain(t) - oracle.gain(t))))
        .fold(0.0, f64::max);
    (terminal, max)
}

fn estimation_error(cfg: &ExperimentConfig, bank: &DataFilterBank, oracle: &KalmanOracle, seed: u64) -> Result<f64> {
    let spec = ExperimentInputSpec::new(cfg.sigma_u.clone(), cfg.horizon, 1, seed)?;
    let test = replay_open_loop_trajectory(&cfg.system, &spec, derive_seed(seed, &[domain::TEST]))?;
    let mut errors = Vec::with_capacity(cfg.horizon + 1);
    for t in 0..=cfg.horizon {
        let window = EstimationWindow::from_records(t, &test.inputs, &test.outputs);
        errors.push((bank.estimate(&window)? - oracle.estimate(&window)?).norm());
    }
    Ok(match cfg.options.state_aggregate {
        StateAggregate::Max => errors.iter().cloned().fold(0.0, f64::max),
        StateAggregate::Terminal => errors[cfg.horizon],
    })
}

fn input_error(
    cfg: &ExperimentConfig,
    k_d: &DMatrix<f64>,
    bank: &DataFilterBank,
    oracles: &Oracles,
    seed: u64,
) -> Result<f64> {
    let (x0, noise) = episode_conditions(&cfg.system, cfg.horizon, seed)?;
    let data_run = run_dd_lqg_episode_with(&cfg.system, k_d, bank, &x0, &noise)?;
    let oracle_noise = if cfg.options.paired_noise {
        noise
    } else {
        NoiseRealization::draw(&cfg.system, cfg.horizon, derive_seed(seed, &[domain::TEST]))?
    };
    let mut rec = RecursiveLqg::new(&cfg.system, oracles.k_lqr.clone(), FilterKind::TimeVarying);
    let oracle_run = run_closed_loop(&cfg.system, &mut rec, &x0, &oracle_noise)?;
    Ok((data_run.inputs - oracle_run.inputs).norm())
}

fn run_cell(cfg: &ExperimentConfig, oracles: &Oracles, x0s: &[DVector<f64>], n: usize, rep: usize) -> CellOutput {
    let seed = cell_seed(cfg.seed, n, rep);
    let mut cells = Vec::new();
    let mut diag = CellDiagnostics {
        n,
        rep,
        ..Default::default()
    };
    let spec = ExperimentInputSpec {
        sigma_u: cfg.sigma_u.clone(),
        horizon: cfg.horizon,
        trajectories: n,
        seed,
    };
    let dataset = match generate_open_loop_dataset(&cfg.system, &spec) {
        Ok(d) => d,
        Err(e) => {
            for &p in &cfg.panels {
                cells.push(Cell::failed(p, n, rep, e.kind()));
            }
            return CellOutput {
                cells,
                diagnostics: diag,
            };
        }
    };

    let needs_k = cfg.wants(Panel::A) || cfg.wants(Panel::D) || cfg.wants(Panel::E);
    let k_d = if needs_k {
        Some(lqr_gain_from_data(
            &dataset,
            &cfg.weights,
            x0s,
            Some(&oracles.lqr_reference),
        ))
    } else {
        None
    };
    if let Some(Ok(est)) = &k_d {
        diag.kappa = est.kappa;
        diag.trajectory_sigma_min = Some(est.sigma_min_xm);
    }
    diag.excitation_sigma_min = Some(linalg::sigma_min(&dataset.x0_and_inputs()));

    let needs_bank = Panel::ALL[1..].iter().any(|&p| cfg.wants(p));
    let bank = if needs_bank {
        Some(filter_bank_from_data(&dataset))
    } else {
        None
    };
    if let Some(Ok(b)) = &bank {
        let (terminal, max) = filter_errors(b, &oracles.kalman);
        diag.filter_sigma_min = b.conditioning.last().copied();
        diag.filter_error_terminal = Some(terminal);
        diag.filter_error_max_t = Some(max);
    }

    let k_ref = || upstream(k_d.as_ref().expect("gain requested")).map(|est| &est.k);
    let bank_ref = || upstream(bank.as_ref().expect("bank requested"));

    for &panel in &cfg.panels {
        match panel {
            Panel::A => record(&mut cells, panel, n, rep, || {
                Ok(linalg::spectral_norm(&(k_ref()? - &oracles.k_lqr)))
            }),
            Panel::B => record(&mut cells, panel, n, rep, || {
                let b = bank_ref()?;
                let (terminal, max) = filter_errors(b, &oracles.kalman);
                Ok(match cfg.options.filter_time {
                    FilterTime::Terminal => terminal,
                    FilterTime::MaxOverT => max,
                })
            }),
            Panel::C => record(&mut cells, panel, n, rep, || {
                Ok(estimation_error(
                    cfg,
                    bank_ref()?,
                    &oracles.kalman,
                    derive_seed(seed, &[PANEL_TEST]),
                )?)
            }),
            Panel::D => record(&mut cells, panel, n, rep, || {
                Ok(input_error(
                    cfg,
                    k_ref()?,
                    bank_ref()?,
                    oracles,
                    derive_seed(seed, &[PANEL_EPISODE]),
                )?)
            }),
            Panel::E => {
                let mut diag_e = (None, None);
                record(&mut cells, panel, n, rep, || {
                    let k = k_ref()?;
                    let b = bank_ref()?;
                    let cl = collect_closed_loop_dataset(
                        &cfg.system,
                        k,
                        b,
                        cfg.options.closed_loop_episodes,
                        derive_seed(seed, &[PANEL_CLOSED_LOOP]),
                    )?;
                    let est = lqg_gain_from_data(&cl, k, b)?;
                    diag_e = (Some(est.c4_norm), Some(est.window_sigma_min));
                    Ok(linalg::spectral_norm(&(est.k - &oracles.k_lqg)))
                });
                diag.c4_norm = diag_e.0;
                diag.window_sigma_min = diag_e.1;
            }
        }
    }
    CellOutput {
        cells,
        diagnostics: diag,
    }
}

/// Runs every `(N, rep)` cell and summarizes each panel.
///
/// The report depends only on the config, not on the number of workers.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let x0s = cfg.initial_states();
    let oracles = build_oracles(cfg, &x0s)?;
    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.repetitions).map(move |rep| (n, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outputs: Vec<CellOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|&(n, rep)| {
                let out = run_cell(cfg, &oracles, &x0s, n, rep);
                log::info!("cell N={n} rep={rep} done");
                out
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(outputs.len() * cfg.panels.len());
    let mut diagnostics = Vec::with_capacity(outputs.len());
    for out in outputs {
        cells.extend(out.cells);
        diagnostics.push(out.diagnostics);
    }
    let mut panels: Vec<Panel> = cfg.panels.clone();
    panels.sort();
    panels.dedup();
    cells.sort_by_key(|c| (c.panel, c.n, c.rep));
    let summaries = panels
        .iter()
        .map(|&p| report::summarize_panel(p, &cfg.n_grid, &cells))
        .collect();
    Ok(ConvergenceReport {
        seed: cfg.seed,
        horizon: cfg.horizon,
        n_grid: cfg.n_grid.clone(),
        repetitions: cfg.repetitions,
        panels: summaries,
        cells,
        diagnostics,
    })
}

/// Acceptance thresholds evaluated against a finished report.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Thresholds {
    /// Inclusive bounds on the median-fit slope of `slope_panels`.
    pub slope_range: Option<(f64, f64)>,
    pub slope_panels: Vec<Panel>,
    /// Panels whose medians must be non-increasing in N.
    pub monotone_panels: Vec<Panel>,
    /// Panels whose slope must be negative with 95% confidence, judged on the fit over
    /// all successful cells.
    pub negative_slope_panels: Vec<Panel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn slope_detail(p: Option<&PanelSummary>) -> String {
    fit_detail(p, p.and_then(|p| p.median_fit))
}

fn fit_detail(p: Option<&PanelSummary>, fit: Option<rate::RateFit>) -> String {
    match fit {
        Some(f) => match f.half_width {
            Some(h) => format!("slope {:.4} +/- {:.4}", f.slope, h),
            None => format!("slope {:.4}", f.slope),
        },
        None => p
            .and_then(|p| p.fit_note.clone())
            .unwrap_or_else(|| "panel not in report".into()),
    }
}

pub fn check_thresholds(report: &ConvergenceReport, thresholds: &Thresholds) -> Vec<ThresholdOutcome> {
    let mut out = Vec::new();
    if let Some((lo, hi)) = thresholds.slope_range {
        for &panel in &thresholds.slope_panels {
            let p = report.panel(panel);
            out.push(ThresholdOutcome {
                name: format!("panel {} slope in [{lo}, {hi}]", panel.letter()),
                passed: p.and_then(|p| p.median_fit).is_some_and(|f| f.within(lo, hi)),
                detail: slope_detail(p),
            });
        }
    }
    for &panel in &thresholds.monotone_panels {
        let p = report.panel(panel);
        out.push(ThresholdOutcome {
            name: format!("panel {} medians non-increasing", panel.letter()),
            passed: p.is_some_and(|p| p.monotone.passed),
            detail: match p {
                Some(p) => format!(
                    "medians {:?}, inversions {}",
                    p.stats.iter().map(|s| s.median).collect::<Vec<_>>(),
                    p.monotone.inversions
                ),
                None => "panel not in report".into(),
            },
        });
    }
    for &panel in &thresholds.negative_slope_panels {
        let p = report.panel(panel);
        out.push(ThresholdOutcome {
            name: format!("panel {} slope < 0 at 95%", panel.letter()),
            passed: p.and_then(|p| p.cell_fit).is_some_and(|f| f.negative_with_confidence()),
            detail: format!("all-cell {}", fit_detail(p, p.and_then(|p| p.cell_fit))),
        });
    }
    out
}
