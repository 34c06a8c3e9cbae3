//! Report types, per-N statistics and CSV/JSON emission.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::rate::{fit_rate, RateFit};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Panel {
    A,
    B,
    C,
    D,
    E,
}

impl Panel {
    pub const ALL: [Panel; 5] = [Panel::A, Panel::B, Panel::C, Panel::D, Panel::E];

    pub fn letter(self) -> &'static str {
        match self {
            Panel::A => "a",
            Panel::B => "b",
            Panel::C => "c",
            Panel::D => "d",
            Panel::E => "e",
        }
    }

    pub fn from_letter(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Panel::A),
            "b" => Ok(Panel::B),
            "c" => Ok(Panel::C),
            "d" => Ok(Panel::D),
            "e" => Ok(Panel::E),
            other => Err(Error::Config(format!("unknown panel `{other}`"))),
        }
    }

    pub fn metric(self) -> &'static str {
        match self {
            Panel::A => "||K_lqr_d - K_lqr||_2",
            Panel::B => "||L_d - L_kf||_2",
            Panel::C => "||x_hat_d - x_hat_kf||",
            Panel::D => "||u_dlqg - u_lqg||",
            Panel::E => "||K_lqg_d - K_lqg||_2",
        }
    }
}

/// One `(panel, N, rep)` outcome: a finite error or a named failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub panel: Panel,
    pub n: usize,
    pub rep: usize,
    pub error: Option<f64>,
    pub status: String,
}

impl Cell {
    pub fn ok(panel: Panel, n: usize, rep: usize, error: f64) -> Self {
        if error.is_finite() {
            Self {
                panel,
                n,
                rep,
                error: Some(error),
                status: "ok".into(),
            }
        } else {
            Self::failed(panel, n, rep, "non_finite")
        }
    }

    pub fn failed(panel: Panel, n: usize, rep: usize, status: &str) -> Self {
        Self {
            panel,
            n,
            rep,
            error: None,
            status: status.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStats {
    pub n: usize,
    pub successes: usize,
    pub failures: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// `1.2533 * std / sqrt(k)`.
    pub median_std_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCheck {
    /// Consecutive N pairs whose median increases.
    pub inversions: usize,
    /// Largest increase divided by the std-err of the difference of medians.
    pub worst_inversion_z: Option<f64>,
    /// True when every N has a median, at most one inversion occurs and it stays within one std-err.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub panel: Panel,
    pub metric: String,
    pub stats: Vec<NStats>,
    /// Fit of log median against log N.
    pub median_fit: Option<RateFit>,
    /// Fit over every successful cell.
    pub cell_fit: Option<RateFit>,
    /// Why a fit is missing.
    pub fit_note: Option<String>,
    pub monotone: MonotoneCheck,
}

/// Per `(N, rep)` diagnostics gathered alongside the panel errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CellDiagnostics {
    pub n: usize,
    pub rep: usize,
    pub kappa: Option<f64>,
    pub excitation_sigma_min: Option<f64>,
    pub trajectory_sigma_min: Option<f64>,
    pub filter_sigma_min: Option<f64>,
    pub filter_error_terminal: Option<f64>,
    pub filter_error_max_t: Option<f64>,
    pub c4_norm: Option<f64>,
    pub window_sigma_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub horizon: usize,
    pub n_grid: Vec<usize>,
    pub repetitions: usize,
    pub panels: Vec<PanelSummary>,
    pub cells: Vec<Cell>,
    pub diagnostics: Vec<CellDiagnostics>,
}

impl ConvergenceReport {
    pub fn panel(&self, panel: Panel) -> Option<&PanelSummary> {
        self.panels.iter().find(|p| p.panel == panel)
    }
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

pub fn n_stats(n: usize, cells: &[&Cell]) -> NStats {
    let mut values: Vec<f64> = cells.iter().filter_map(|c| c.error).collect();
    values.sort_by(f64::total_cmp);
    let k = values.len();
    let failures = cells.len() - k;
    if k == 0 {
        return NStats {
            n,
            successes: 0,
            failures,
            median: None,
            mean: None,
            std: None,
            median_std_err: None,
        };
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    let std = if k > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    NStats {
        n,
        successes: k,
        failures,
        median: Some(median(&values)),
        mean: Some(mean),
        std: Some(std),
        median_std_err: Some(1.2533 * std / (k as f64).sqrt()),
    }
}

pub fn monotone_check(stats: &[NStats]) -> MonotoneCheck {
    let complete = stats.iter().all(|s| s.median.is_some());
    let mut inversions = 0;
    let mut worst: Option<f64> = None;
    for pair in stats.windows(2) {
        if let (Some(m0), Some(m1)) = (pair[0].median, pair[1].median) {
            if m1 > m0 {
                inversions += 1;
                let se = (pair[0].median_std_err.unwrap_or(0.0).powi(2)
                    + pair[1].median_std_err.unwrap_or(0.0).powi(2))
                .sqrt();
                let z = if se > 0.0 { (m1 - m0) / se } else { f64::MAX };
                worst = Some(worst.map_or(z, |w: f64| w.max(z)));
            }
        }
    }
    MonotoneCheck {
        inversions,
        worst_inversion_z: worst,
        passed: complete && inversions <= 1 && worst.is_none_or(|z| z <= 1.0),
    }
}

pub fn summarize_panel(panel: Panel, n_grid: &[usize], cells: &[Cell]) -> PanelSummary {
    let stats: Vec<NStats> = n_grid
        .iter()
        .map(|&n| {
            let subset: Vec<&Cell> = cells.iter().filter(|c| c.panel == panel && c.n == n).collect();
            n_stats(n, &subset)
        })
        .collect();
    let median_points: Vec<(f64, f64)> = stats.iter().filter_map(|s| s.median.map(|m| (s.n as f64, m))).collect();
    let cell_points: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| c.panel == panel)
        .filter_map(|c| c.error.map(|e| (c.n as f64, e)))
        .collect();
    let (median_fit, fit_note) = match fit_rate(&median_points) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let cell_fit = fit_rate(&cell_points).ok();
    PanelSummary {
        panel,
        metric: panel.metric().into(),
        monotone: monotone_check(&stats),
        stats,
        median_fit,
        cell_fit,
        fit_note,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn csv_string<F>(header: &[&str], fill: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Config(e.to_string()))?;
    fill(&mut w).map_err(|e| Error::Config(e.to_string()))?;
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
}

/// `panel,N,rep,error,status` rows of one panel.
pub fn panel_csv(report: &ConvergenceReport, panel: Panel) -> Result<String> {
    csv_string(&["panel", "N", "rep", "error", "status"], |w| {
        for c in report.cells.iter().filter(|c| c.panel == panel) {
            w.write_record([
                panel.letter().to_string(),
                c.n.to_string(),
                c.rep.to_string(),
                fmt_opt(c.error),
                c.status.clone(),
            ])?;
        }
        Ok(())
    })
}

pub fn summary_csv(report: &ConvergenceReport) -> Result<String> {
    let header = [
        "panel",
        "N",
        "successes",
        "failures",
        "median",
        "mean",
        "std",
        "median_std_err",
        "slope",
        "slope_half_width",
        "cell_slope",
        "cell_slope_half_width",
        "monotone",
    ];
    csv_string(&header, |w| {
        for p in &report.panels {
            for s in &p.stats {
                w.write_record([
                    p.panel.letter().to_string(),
                    s.n.to_string(),
                    s.successes.to_string(),
                    s.failures.to_string(),
                    fmt_opt(s.median),
                    fmt_opt(s.mean),
                    fmt_opt(s.std),
                    fmt_opt(s.median_std_err),
                    fmt_opt(p.median_fit.map(|f| f.slope)),
                    fmt_opt(p.median_fit.and_then(|f| f.half_width)),
                    fmt_opt(p.cell_fit.map(|f| f.slope)),
                    fmt_opt(p.cell_fit.and_then(|f| f.half_width)),
                    p.monotone.passed.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn diagnostics_csv(report: &ConvergenceReport) -> Result<String> {
    let header = [
        "N",
        "rep",
        "kappa",
        "excitation_sigma_min",
        "trajectory_sigma_min",
        "filter_sigma_min",
        "filter_error_terminal",
        "filter_error_max_t",
        "c4_norm",
        "window_sigma_min",
    ];
    csv_string(&header, |w| {
        for d in &report.diagnostics {
            w.write_record([
                d.n.to_string(),
                d.rep.to_string(),
                fmt_opt(d.kappa),
                fmt_opt(d.excitation_sigma_min),
                fmt_opt(d.trajectory_sigma_min),
                fmt_opt(d.filter_sigma_min),
                fmt_opt(d.filter_error_terminal),
                fmt_opt(d.filter_error_max_t),
                fmt_opt(d.c4_norm),
                fmt_opt(d.window_sigma_min),
            ])?;
        }
        Ok(())
    })
}

pub fn report_json(report: &ConvergenceReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report_json(text: &str) -> Result<ConvergenceReport> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("report JSON: {e}")))
}

/// Writes the report under `dir` and returns the written paths.
///
/// CSV output: `panel_<x>.csv` for every panel in the report, `summary.csv` and
/// `diagnostics.csv`. JSON output: `report.json`.
pub fn emit_report(report: &ConvergenceReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            for p in &report.panels {
                let path = dir.join(format!("panel_{}.csv", p.panel.letter()));
                write_file(&path, &panel_csv(report, p.panel)?)?;
                written.push(path);
            }
            let path = dir.join("summary.csv");
            write_file(&path, &summary_csv(report)?)?;
            written.push(path);
            let path = dir.join("diagnostics.csv");
            write_file(&path, &diagnostics_csv(report)?)?;
            written.push(path);
        }
        ReportFormat::Json => {
            let path = dir.join("report.json");
            write_file(&path, &report_json(report)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Human-readable one-line-per-panel digest.
pub fn digest(report: &ConvergenceReport) -> String {
    let mut out = String::new();
    for p in &report.panels {
        let medians: Vec<String> = p
            .stats
            .iter()
            .map(|s| format!("N={}: {}", s.n, s.median.map_or("-".into(), |m| format!("{m:.4e}"))))
            .collect();
        let slope = match p.median_fit {
            Some(f) => match f.half_width {
                Some(h) => format!("{:.3} +/- {:.3}", f.slope, h),
                None => format!("{:.3}", f.slope),
            },
            None => "undefined".into(),
        };
        let _ = writeln!(
            out,
            "panel {}: {} | slope {} | monotone {}",
            p.panel.letter(),
            medians.join(", "),
            slope,
            p.monotone.passed
        );
    }
    out
}
