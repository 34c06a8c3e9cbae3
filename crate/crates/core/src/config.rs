//! JSON configuration files and CSV exports.
//!
//! Matrices are written as row-major nested arrays, e.g. `"A": [[0.7, 1.2], [0.0, 0.4]]`.
//! Only `system` is mandatory; every other section falls back to the defaults below.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dd_lqg::ClosedLoopDataset;
use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, FilterTime, Panel, PanelOptions, StateAggregate, Thresholds};
use crate::system::{CostWeights, ExperimentInputSpec, LinearSystem, TrajectoryDataset};

pub type RowMajor = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A")]
    pub a: RowMajor,
    #[serde(rename = "B")]
    pub b: RowMajor,
    #[serde(rename = "C")]
    pub c: RowMajor,
    #[serde(rename = "Q_w")]
    pub q_w: RowMajor,
    #[serde(rename = "R_v")]
    pub r_v: RowMajor,
    #[serde(rename = "Sigma0")]
    pub sigma0: RowMajor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    #[serde(rename = "Q_x")]
    pub q_x: RowMajor,
    #[serde(rename = "R_u")]
    pub r_u: RowMajor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(rename = "Sigma_u")]
    pub sigma_u: Option<RowMajor>,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "N")]
    pub trajectories: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrSection {
    /// Initial states for the gain fit; defaults to the canonical basis.
    pub initial_states: Option<RowMajor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopSection {
    #[serde(rename = "M", default = "default_episodes")]
    pub episodes: usize,
    /// Length of the static-gain evaluation run.
    #[serde(rename = "T_eval", default = "default_eval_horizon")]
    pub eval_horizon: usize,
}

fn default_episodes() -> usize {
    50
}

fn default_eval_horizon() -> usize {
    500
}

impl Default for ClosedLoopSection {
    fn default() -> Self {
        Self {
            episodes: default_episodes(),
            eval_horizon: default_eval_horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    #[serde(rename = "N_grid")]
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    #[serde(default = "all_panels")]
    pub panels: Vec<String>,
    /// `terminal` or `max`.
    #[serde(default = "default_terminal")]
    pub filter_time: String,
    /// `max` or `terminal`.
    #[serde(default = "default_max")]
    pub state_aggregate: String,
    #[serde(default = "default_true")]
    pub paired_noise: bool,
    #[serde(default)]
    pub workers: usize,
}

fn all_panels() -> Vec<String> {
    Panel::ALL.iter().map(|p| p.letter().to_string()).collect()
}

fn default_terminal() -> String {
    "terminal".into()
}

fn default_max() -> String {
    "max".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LemmaSection {
    pub delta: f64,
    pub product_n: usize,
    pub product_m: usize,
    #[serde(rename = "product_N")]
    pub product_samples: usize,
    pub product_reps: usize,
    pub singular_n: usize,
    #[serde(rename = "singular_N")]
    pub singular_samples: usize,
    pub singular_reps: usize,
}

impl Default for LemmaSection {
    fn default() -> Self {
        Self {
            delta: 0.05,
            product_n: 2,
            product_m: 2,
            product_samples: 1000,
            product_reps: 500,
            singular_n: 5,
            singular_samples: 200,
            singular_reps: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub slope_range: Option<[f64; 2]>,
    #[serde(default)]
    pub slope_panels: Vec<String>,
    #[serde(default)]
    pub monotone_panels: Vec<String>,
    #[serde(default)]
    pub negative_slope_panels: Vec<String>,
}

/// Top-level config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub system: SystemSection,
    pub weights: Option<WeightsSection>,
    pub experiment: Option<ExperimentSection>,
    #[serde(default)]
    pub lqr: LqrSection,
    #[serde(default)]
    pub closed_loop: ClosedLoopSection,
    pub harness: Option<HarnessSection>,
    #[serde(default)]
    pub lemma: LemmaSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
}

pub fn matrix_from_rows(rows: &RowMajor, name: &str) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(Error::Config(format!("matrix `{name}` is empty")));
    }
    if let Some(bad) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::Config(format!(
            "matrix `{name}` is ragged: row {bad} has {} entries, row 0 has {c}",
            rows[bad].len()
        )));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("matrix `{name}` has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> RowMajor {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn panels_from(names: &[String]) -> Result<Vec<Panel>> {
    names.iter().map(|s| Panel::from_letter(s)).collect()
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn system(&self) -> Result<LinearSystem> {
        let s = &self.system;
        LinearSystem::new(
            matrix_from_rows(&s.a, "A")?,
            matrix_from_rows(&s.b, "B")?,
            matrix_from_rows(&s.c, "C")?,
            matrix_from_rows(&s.q_w, "Q_w")?,
            matrix_from_rows(&s.r_v, "R_v")?,
            matrix_from_rows(&s.sigma0, "Sigma0")?,
        )
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let w = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Config("missing `weights` section".into()))?;
        CostWeights::new(matrix_from_rows(&w.q_x, "Q_x")?, matrix_from_rows(&w.r_u, "R_u")?)
    }

    fn experiment_section(&self) -> Result<&ExperimentSection> {
        self.experiment
            .as_ref()
            .ok_or_else(|| Error::Config("missing `experiment` section".into()))
    }

    fn sigma_u(&self, system: &LinearSystem) -> Result<DMatrix<f64>> {
        match &self.experiment_section()?.sigma_u {
            Some(rows) => matrix_from_rows(rows, "Sigma_u"),
            None => Ok(DMatrix::identity(system.m(), system.m())),
        }
    }

    /// Open-loop input spec; `seed` overrides the config seed.
    pub fn input_spec(&self, system: &LinearSystem, seed: Option<u64>) -> Result<ExperimentInputSpec> {
        let e = self.experiment_section()?;
        ExperimentInputSpec::new(self.sigma_u(system)?, e.horizon, e.trajectories, seed.unwrap_or(e.seed))
    }

    pub fn lqr_initial_states(&self, n: usize) -> Result<Option<Vec<DVector<f64>>>> {
        match &self.lqr.initial_states {
            None => Ok(None),
            Some(rows) => {
                if rows.is_empty() || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("`lqr.initial_states` must list {n}-vectors")));
                }
                Ok(Some(rows.iter().map(|r| DVector::from_column_slice(r)).collect()))
            }
        }
    }

    /// Harness configuration; `seed` and `workers` override the file.
    pub fn experiment_config(&self, seed: Option<u64>, workers: Option<usize>) -> Result<ExperimentConfig> {
        let system = self.system()?;
        let weights = self.weights()?;
        let e = self.experiment_section()?;
        let h = self
            .harness
            .as_ref()
            .ok_or_else(|| Error::Config("missing `harness` section".into()))?;
        let filter_time = match h.filter_time.as_str() {
            "terminal" => FilterTime::Terminal,
            "max" => FilterTime::MaxOverT,
            other => return Err(Error::Config(format!("unknown filter_time `{other}`"))),
        };
        let state_aggregate = match h.state_aggregate.as_str() {
            "max" => StateAggregate::Max,
            "terminal" => StateAggregate::Terminal,
            other => return Err(Error::Config(format!("unknown state_aggregate `{other}`"))),
        };
        let cfg = ExperimentConfig {
            sigma_u: self.sigma_u(&system)?,
            horizon: e.horizon,
            n_grid: h.n_grid.clone(),
            repetitions: h.repetitions,
            panels: panels_from(&h.panels)?,
            seed: seed.unwrap_or(e.seed),
            workers: workers.unwrap_or(h.workers),
            options: PanelOptions {
                filter_time,
                state_aggregate,
                paired_noise: h.paired_noise,
                closed_loop_episodes: self.closed_loop.episodes,
                lqr_initial_states: self.lqr_initial_states(system.n())?,
            },
            system,
            weights,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn thresholds(&self) -> Result<Thresholds> {
        let t = &self.thresholds;
        Ok(Thresholds {
            slope_range: t.slope_range.map(|r| (r[0], r[1])),
            slope_panels: panels_from(&t.slope_panels)?,
            monotone_panels: panels_from(&t.monotone_panels)?,
            negative_slope_panels: panels_from(&t.negative_slope_panels)?,
        })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Matrix as headerless CSV, one matrix row per line.
pub fn matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_csv(m))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(text.as_bytes());
    let mut rows: RowMajor = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("{}: `{s}`: {e}", path.display())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows, &path.display().to_string())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `U.csv`, `X.csv`, `Y.csv` (one trajectory per column) and `seeds.csv`.
pub fn export_dataset(dataset: &TrajectoryDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for (name, m) in [("U.csv", &dataset.u), ("X.csv", &dataset.x), ("Y.csv", &dataset.y)] {
        let path = dir.join(name);
        write_matrix_csv(&path, m)?;
        written.push(path);
    }
    let path = dir.join("seeds.csv");
    let mut seeds = String::from("trajectory,seed\n");
    for (i, s) in dataset.seeds.iter().enumerate() {
        seeds.push_str(&format!("{i},{s}\n"));
    }
    write_text(&path, &seeds)?;
    written.push(path);
    Ok(written)
}

/// Writes `U_dlqg.csv`, `Y_dlqg.csv`, `U_n.csv`, `Y_n.csv`, `U_T.csv` and `seeds.csv`.
pub fn export_closed_loop_dataset(cl: &ClosedLoopDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for (name, m) in [
        ("U_dlqg.csv", &cl.u),
        ("Y_dlqg.csv", &cl.y),
        ("U_n.csv", &cl.u_window),
        ("Y_n.csv", &cl.y_window),
        ("U_T.csv", &cl.u_terminal),
    ] {
        let path = dir.join(name);
        write_matrix_csv(&path, m)?;
        written.push(path);
    }
    let path = dir.join("seeds.csv");
    let mut seeds = String::from("episode,seed\n");
    for (i, s) in cl.seeds.iter().enumerate() {
        seeds.push_str(&format!("{i},{s}\n"));
    }
    write_text(&path, &seeds)?;
    written.push(path);
    Ok(written)
}

/// One CSV per filter gain, named `L_<t>.csv` with `t` zero-padded to the horizon width.
pub fn export_gains(gains: &[DMatrix<f64>], dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let width = gains.len().saturating_sub(1).to_string().len();
    gains
        .iter()
        .enumerate()
        .map(|(t, g)| {
            let path = dir.join(format!("L_{t:0width$}.csv"));
            write_matrix_csv(&path, g).map(|_| path)
        })
        .collect()
}

/// Key/value diagnostics file.
pub fn write_key_values(path: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut out = String::from("key,value\n");
    for (k, v) in entries {
        out.push_str(&format!("{k},{v}\n"));
    }
    write_text(path, &out)
}
