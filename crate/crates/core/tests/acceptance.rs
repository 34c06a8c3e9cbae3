//! Acceptance run on the benchmark plant. Prints one PASS/FAIL line per criterion.
//!
//! Sub-checks listed in `KNOWN_RED` are reported but allowed to fail (see "Known limitations" in
//! the README). Every other sub-check must pass.

use ddlqg::config::ConfigFile;
use ddlqg::controller::{run_closed_loop, StaticGainController};
use ddlqg::dd_kalman::filter_bank_from_data;
use ddlqg::dd_lqg::{collect_closed_loop_dataset, episode_conditions, lqg_gain_from_data, run_dd_lqg_episode_with};
use ddlqg::dd_lqr::{build_synthesis, lqr_trajectories};
use ddlqg::harness::lemmas::{
    lemma_check_gaussian_product, lemma_check_singular_values, product_min_samples, singular_value_min_samples,
};
use ddlqg::harness::report::{parse_report_json, ConvergenceReport, Panel};
use ddlqg::harness::run_convergence;
use ddlqg::oracle::*;
use ddlqg::system::*;
use nalgebra::{DMatrix, DVector};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

const HORIZON: usize = 50;
const SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);

const KNOWN_RED: &[&str] = &[
    "panel a slope in range",
    "panel b slope in range over full grid",
    "panel c slope in range over full grid",
    "panel d medians non-increasing",
    "panel e medians non-increasing",
];

struct Check {
    name: String,
    passed: bool,
    detail: String,
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn within_time(limit: Duration, took: Duration) -> Check {
    check(
        format!("runtime < {:?}", limit),
        took < limit,
        format!("{:.2}s", took.as_secs_f64()),
    )
}

struct Criterion {
    label: &'static str,
    checks: Vec<Check>,
}

impl Criterion {
    fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn print(&self) {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| format!("{}{} ({})", if c.passed { "" } else { "!" }, c.name, c.detail))
            .collect();
        println!("{status} {}: {}", self.label, parts.join("; "));
    }
}

fn plant() -> (LinearSystem, CostWeights) {
    (LinearSystem::benchmark(), CostWeights::benchmark())
}

fn oracle_lqr() -> Criterion {
    let start = Instant::now();
    let (sys, w) = plant();
    let lqr = lqr_gain(&sys, &w).unwrap();
    let residual = dare_residual(&sys.a, &sys.b, &w.q_x, &w.r_u, &lqr.p).unwrap();
    let target = [0.241, 0.788];
    let dev = (0..2)
        .map(|j| (lqr.k[(0, j)].abs() - target[j]).abs())
        .fold(0.0, f64::max);
    Criterion {
        label: "oracle LQR",
        checks: vec![
            check("DARE residual < 1e-9", residual < 1e-9, format!("{residual:.2e}")),
            check(
                "|K| within 0.005 of [0.241, 0.788]",
                dev <= 0.005,
                format!("K = {:.4}, {:.4}", lqr.k[(0, 0)], lqr.k[(0, 1)]),
            ),
            within_time(Duration::from_secs(1), start.elapsed()),
        ],
    }
}

fn noise_free_exactness() -> Criterion {
    let start = Instant::now();
    let (sys, w) = plant();
    let sys = sys.with_noise(DMatrix::zeros(2, 2), sys.r_v.clone()).unwrap();
    let spec = ExperimentInputSpec::new(DMatrix::identity(1, 1), HORIZON, 400, 17).unwrap();
    let ds = generate_open_loop_dataset(&sys, &spec).unwrap();
    let synth = build_synthesis(&ds, &w).unwrap();
    let mut worst = 0.0f64;
    for x0 in [
        DVector::from_vec(vec![1.0, -0.5]),
        DVector::from_vec(vec![0.0, 1.0]),
        DVector::from_vec(vec![2.0, 3.0]),
    ] {
        let est = lqr_trajectories(&synth, &x0).unwrap();
        let (u, x) = finite_horizon_lqr(&sys, &w, HORIZON, &x0).unwrap();
        worst = worst
            .max((&est.u_m - &u).norm() / u.norm())
            .max((&est.x_m - &x).norm() / x.norm());
    }
    let fit = &synth.m_map * ds.x0_and_inputs() - &ds.x;
    let fit_rel = fit.norm() / ds.x.norm();
    Criterion {
        label: "noise-free exactness",
        checks: vec![
            check(
                "trajectories match finite-horizon LQR to 1e-6",
                worst < 1e-6,
                format!("{worst:.2e}"),
            ),
            check("M [X0; U] = X to 1e-9", fit_rel < 1e-9, format!("{fit_rel:.2e}")),
            within_time(Duration::from_secs(10), start.elapsed()),
        ],
    }
}

fn slope_check(report: &ConvergenceReport, panel: Panel, full_grid: bool) -> Check {
    let summary = report.panel(panel).expect("panel in report");
    let (lo, hi) = SLOPE_RANGE;
    let name = if full_grid {
        format!("panel {} slope in range over full grid", panel.letter())
    } else {
        format!("panel {} slope in range", panel.letter())
    };
    match summary.median_fit.as_ref() {
        Some(f) => {
            let covered = f.points == report.n_grid.len();
            check(
                name,
                f.within(lo, hi) && (covered || !full_grid),
                format!(
                    "slope {:.3} from {}/{} grid points",
                    f.slope,
                    f.points,
                    report.n_grid.len()
                ),
            )
        }
        None => check(name, false, summary.fit_note.clone().unwrap_or_default()),
    }
}

fn monotone_check(report: &ConvergenceReport, panel: Panel) -> Check {
    let summary = report.panel(panel).expect("panel in report");
    let medians: Vec<String> = summary
        .stats
        .iter()
        .map(|s| s.median.map_or("-".into(), |m| format!("{m:.3e}")))
        .collect();
    check(
        format!("panel {} medians non-increasing", panel.letter()),
        summary.monotone.passed,
        format!("[{}], {} inversions", medians.join(", "), summary.monotone.inversions),
    )
}

fn panel_a_rate(report: &ConvergenceReport, took: Duration) -> Criterion {
    Criterion {
        label: "LQR gain rate",
        checks: vec![
            monotone_check(report, Panel::A),
            slope_check(report, Panel::A, false),
            within_time(Duration::from_secs(600), took),
        ],
    }
}

fn filter_rate(report: &ConvergenceReport, took: Duration) -> Criterion {
    let start = Instant::now();
    let (sys, _) = plant();
    let spec = ExperimentInputSpec::new(DMatrix::identity(1, 1), HORIZON, 100_000, 23).unwrap();
    let ds = generate_open_loop_dataset(&sys, &spec).unwrap();
    let bank = filter_bank_from_data(&ds).unwrap();
    let l0 = &bank.gains[0];
    let dev = (l0[(0, 0)] - 0.5).abs().max(l0[(1, 0)].abs());
    Criterion {
        label: "filter rate",
        checks: vec![
            slope_check(report, Panel::B, true),
            slope_check(report, Panel::C, true),
            check(
                "L_0 within 0.02 of [0.5; 0] at N = 1e5",
                dev <= 0.02,
                format!("L_0 = [{:.4}; {:.4}]", l0[(0, 0)], l0[(1, 0)]),
            ),
            within_time(Duration::from_secs(900), took + start.elapsed()),
        ],
    }
}

fn oracle_substitution() -> Criterion {
    let (sys, w) = plant();
    let k = lqr_gain(&sys, &w).unwrap().k;
    let kf = kalman_oracle(&sys, HORIZON).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (x0, noise) = episode_conditions(&sys, HORIZON, seed).unwrap();
        let ep = run_dd_lqg_episode_with(&sys, &k, &kf, &x0, &noise).unwrap();
        let mut rec = RecursiveLqg::new(&sys, k.clone(), FilterKind::TimeVarying);
        let reference = run_closed_loop(&sys, &mut rec, &x0, &noise).unwrap();
        worst = worst.max((ep.inputs - reference.inputs).abs().max());
    }
    let cl = collect_closed_loop_dataset(&sys, &k, &kf, 50, 31).unwrap();
    let assembled = lqg_gain_from_data(&cl, &k, &kf).unwrap();
    let exact = lqg_static_gain(&sys, &w).unwrap();
    let gap = (&assembled.k - &exact.k).abs().max();
    Criterion {
        label: "oracle substitution",
        checks: vec![
            check(
                "inputs match recursive LQG to 1e-10",
                worst < 1e-10,
                format!("{worst:.2e}"),
            ),
            check(
                "static-gain assembly matches model gain to 1e-6",
                gap < 1e-6,
                format!("{gap:.2e}"),
            ),
        ],
    }
}

fn lqg_rate(report: &ConvergenceReport, took: Duration) -> Criterion {
    let e = report.panel(Panel::E).expect("panel e");
    let negative = match e.cell_fit.as_ref() {
        Some(f) => check(
            "panel e slope < 0 at 95%",
            f.negative_with_confidence(),
            format!("slope {:.3} +/- {:.3}", f.slope, f.half_width.unwrap_or(f64::NAN)),
        ),
        None => check("panel e slope < 0 at 95%", false, "no fit"),
    };
    Criterion {
        label: "LQG rate",
        checks: vec![
            monotone_check(report, Panel::D),
            monotone_check(report, Panel::E),
            negative,
            within_time(Duration::from_secs(1200), took),
        ],
    }
}

fn concentration() -> Criterion {
    let start = Instant::now();
    let delta = 0.05;
    let product = lemma_check_gaussian_product(2, 2, product_min_samples(2, 2, delta), delta, 500, 41).unwrap();
    let singular = lemma_check_singular_values(5, singular_value_min_samples(5, delta), delta, 1000, 43).unwrap();
    Criterion {
        label: "concentration bounds",
        checks: vec![
            check(
                "product bound frequency <= 0.05",
                product.frequency <= delta,
                format!("{} of {} at N = {}", product.violations, product.reps, product.samples),
            ),
            check(
                "singular value bounds frequency <= 0.05",
                singular.freq_min <= delta && singular.freq_max <= delta,
                format!(
                    "{:.3} / {:.3} over {} at N = {}",
                    singular.freq_min, singular.freq_max, singular.reps, singular.samples
                ),
            ),
            within_time(Duration::from_secs(120), start.elapsed()),
        ],
    }
}

fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            (
                f.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(f).unwrap(),
            )
        })
        .collect()
}

fn reproduce(config: &Path, out: &Path, format: &str, workers: usize) -> (i32, Duration) {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_ddlqg"))
        .args([
            "reproduce-fig1",
            "--quiet",
            "--format",
            format,
            "--workers",
            &workers.to_string(),
        ])
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .unwrap();
    (status.code().unwrap_or(-1), start.elapsed())
}

fn static_gain_equivalence() -> Criterion {
    let (sys, w) = plant();
    let lqr = lqr_gain(&sys, &w).unwrap();
    let kf = steady_state_kalman(&sys).unwrap();
    let gain = lqg_static_gain(&sys, &w).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let (x0, noise) = episode_conditions(&sys, 1000, 500 + seed).unwrap();
        let mut rec = RecursiveLqg::new(&sys, lqr.k.clone(), FilterKind::SteadyState(kf.gain.clone()));
        let reference = run_closed_loop(&sys, &mut rec, &x0, &noise).unwrap();
        let warm = Box::new(RecursiveLqg::new(
            &sys,
            lqr.k.clone(),
            FilterKind::SteadyState(kf.gain.clone()),
        ));
        let mut stat = StaticGainController::new(gain.k.clone(), sys.n(), warm);
        let run = run_closed_loop(&sys, &mut stat, &x0, &noise).unwrap();
        worst = worst.max((run.inputs - reference.inputs).abs().max());
    }
    Criterion {
        label: "static-gain equivalence",
        checks: vec![check(
            "static and recursive inputs agree to 1e-8 over 1000 steps",
            worst < 1e-8,
            format!("{worst:.2e}"),
        )],
    }
}

/// Same experiment on a grid whose smallest N exceeds the rows of `[U; Y]`. Not a criterion.
fn feasible_grid_info(cfg: &ConfigFile) {
    let mut experiment = cfg.experiment_config(None, None).unwrap();
    experiment.n_grid = vec![200, 1_000, 10_000];
    let report = run_convergence(&experiment).unwrap();
    for p in &report.panels {
        let medians: Vec<String> = p
            .stats
            .iter()
            .map(|s| s.median.map_or("-".into(), |m| format!("{m:.3e}")))
            .collect();
        let slope = p.median_fit.as_ref().map_or("-".into(), |f| format!("{:.3}", f.slope));
        println!(
            "INFO panel {} on N = {:?}: medians [{}], slope {slope}, monotone {}",
            p.panel.letter(),
            report.n_grid,
            medians.join(", "),
            p.monotone.passed
        );
    }
}

fn main() {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/benchmark.json");
    let cfg = ConfigFile::load(&config).unwrap();
    assert_eq!(cfg.system().unwrap(), LinearSystem::benchmark());
    let tmp = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    let mut took = Duration::ZERO;
    for format in ["json", "csv"] {
        let (one, two) = (
            tmp.path().join(format!("{format}1")),
            tmp.path().join(format!("{format}2")),
        );
        let (code_one, t) = reproduce(&config, &one, format, 1);
        let (code_two, _) = reproduce(&config, &two, format, 2);
        took = took.max(t);
        let (first, second) = (report_files(&one), report_files(&two));
        checks.push(check(
            format!("{format} exit codes agree"),
            code_one == code_two,
            format!("{code_one} / {code_two}"),
        ));
        checks.push(check(
            format!("{format} reports byte-identical with 1 and 2 workers"),
            !first.is_empty() && first == second,
            format!("{} files", first.len()),
        ));
    }
    let determinism = Criterion {
        label: "determinism",
        checks,
    };
    let report = parse_report_json(&fs::read_to_string(tmp.path().join("json1/report.json")).unwrap()).unwrap();

    let criteria = vec![
        oracle_lqr(),
        noise_free_exactness(),
        panel_a_rate(&report, took),
        filter_rate(&report, took),
        oracle_substitution(),
        lqg_rate(&report, took),
        concentration(),
        determinism,
        static_gain_equivalence(),
    ];
    for c in &criteria {
        c.print();
    }
    let unexpected: Vec<String> = criteria
        .iter()
        .flat_map(|c| c.checks.iter().map(move |k| (c.label, k)))
        .filter(|(_, k)| !k.passed && !KNOWN_RED.contains(&k.name.as_str()))
        .map(|(label, k)| format!("{label}: {} ({})", k.name, k.detail))
        .collect();
    feasible_grid_info(&cfg);
    let red = criteria.iter().filter(|c| !c.passed()).count();
    println!("{} of {} criteria pass", criteria.len() - red, criteria.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:#?}");
        std::process::exit(1);
    }
}
