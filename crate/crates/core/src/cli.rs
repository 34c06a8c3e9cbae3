//! Command-line front end.
//!
//! Exit status: 0 success, 1 invalid input, 2 numerical failure, 3 a threshold from the
//! config was not met.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{self, ConfigFile};
use crate::controller::run_closed_loop;
use crate::dd_kalman::filter_bank_from_data;
use crate::dd_lqg::{
    collect_closed_loop_dataset, episode_conditions, lqg_gain_from_data, run_static_lqg, SeparatedLqg,
};
use crate::dd_lqr::{canonical_initial_states, lqr_gain_from_data};
use crate::error::{Error, Result};
use crate::harness::lemmas::{lemma_check_gaussian_product, lemma_check_singular_values};
use crate::harness::report::{digest, emit_report};
use crate::harness::{check_thresholds, run_convergence, ReportFormat};
use crate::linalg;
use crate::oracle::{finite_horizon_lqr, kalman_oracle, lqg_static_gain, lqr_gain, FilterKind, RecursiveLqg};
use crate::rng::derive_seed;
use crate::system::generate_open_loop_dataset;
use crate::window::StackedEstimator;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ddlqg", version, about = "Data-driven LQR, Kalman filter and LQG synthesis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for ReportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ReportFormat::Csv,
            Format::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate an open-loop dataset and export it as CSV.
    Simulate(Common),
    /// Data-driven LQR gain.
    Lqr(Common),
    /// Data-driven Kalman filter bank.
    Kf(Common),
    /// Closed-loop data collection and the data-driven static LQG gain.
    Lqg(Common),
    /// Convergence experiment over the N grid.
    #[command(name = "reproduce-fig1")]
    ReproduceFig1(Common),
    /// Monte Carlo checks of the Gaussian concentration bounds.
    #[command(name = "lemma-check")]
    LemmaCheck(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c)
            | Command::Lqr(c)
            | Command::Kf(c)
            | Command::Lqg(c)
            | Command::ReproduceFig1(c)
            | Command::LemmaCheck(c) => c,
        }
    }
}

fn init_logging(common: &Common) {
    let level = if common.quiet {
        log::LevelFilter::Error
    } else {
        match common.verbose {
            0 => log::LevelFilter::Warn,
            1 => log::LevelFilter::Info,
            _ => log::LevelFilter::Debug,
        }
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn say(common: &Common, msg: &str) {
    if !common.quiet {
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), "{msg}");
    }
}

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn install_workers(workers: Option<usize>) {
    if let Some(w) = workers {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
}

fn simulate(cfg: &ConfigFile, c: &Common) -> Result<i32> {
    let system = cfg.system()?;
    let spec = cfg.input_spec(&system, c.seed)?;
    let dataset = generate_open_loop_dataset(&system, &spec)?;
    ensure_out(&c.out)?;
    let files = config::export_dataset(&dataset, &c.out.join("dataset"))?;
    say(
        c,
        &format!(
            "wrote {} files for N = {}, T = {}",
            files.len(),
            dataset.len(),
            dataset.horizon
        ),
    );
    Ok(EXIT_OK)
}

fn lqr(cfg: &ConfigFile, c: &Common) -> Result<i32> {
    let system = cfg.system()?;
    let weights = cfg.weights()?;
    let spec = cfg.input_spec(&system, c.seed)?;
    let x0s = cfg
        .lqr_initial_states(system.n())?
        .unwrap_or_else(|| canonical_initial_states(system.n()));
    let reference = x0s
        .iter()
        .map(|x0| finite_horizon_lqr(&system, &weights, spec.horizon, x0).map(|(_, x)| x))
        .collect::<Result<Vec<_>>>()?;
    let dataset = generate_open_loop_dataset(&system, &spec)?;
    let est = lqr_gain_from_data(&dataset, &weights, &x0s, Some(&reference))?;
    let oracle = lqr_gain(&system, &weights)?;
    let error = linalg::spectral_norm(&(&est.k - &oracle.k));
    ensure_out(&c.out)?;
    config::write_matrix_csv(&c.out.join("K_lqr.csv"), &est.k)?;
    config::write_matrix_csv(&c.out.join("K_lqr_oracle.csv"), &oracle.k)?;
    config::write_key_values(
        &c.out.join("lqr_diagnostics.csv"),
        &[
            ("N", dataset.len().to_string()),
            ("T", dataset.horizon.to_string()),
            ("seed", spec.seed.to_string()),
            ("error_spectral", error.to_string()),
            ("kappa", est.kappa.map(|k| k.to_string()).unwrap_or_default()),
            ("trajectory_sigma_min", est.sigma_min_xm.to_string()),
            ("normal_residual", est.normal_residual.to_string()),
        ],
    )?;
    say(
        c,
        &format!(
            "K_lqr_d = {:?}\nK_lqr   = {:?}\nerror   = {error:.4e}",
            est.k.as_slice(),
            oracle.k.as_slice()
        ),
    );
    Ok(EXIT_OK)
}

fn kf(cfg: &ConfigFile, c: &Common) -> Result<i32> {
    let system = cfg.system()?;
    let spec = cfg.input_spec(&system, c.seed)?;
    let dataset = generate_open_loop_dataset(&system, &spec)?;
    let bank = filter_bank_from_data(&dataset)?;
    let oracle = kalman_oracle(&system, spec.horizon)?;
    ensure_out(&c.out)?;
    config::export_gains(&bank.gains, &c.out.join("bank"))?;
    let residuals = bank.normal_residuals(&dataset);
    let mut table = String::from("t,sigma_min,normal_residual,error_spectral\n");
    for (t, (sigma, residual)) in bank.conditioning.iter().zip(&residuals).enumerate() {
        let err = linalg::spectral_norm(&(bank.gain(t) - oracle.gain(t)));
        table.push_str(&format!("{t},{sigma},{residual},{err}\n"));
    }
    let path = c.out.join("kf_diagnostics.csv");
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    let terminal = linalg::spectral_norm(&(bank.gain(spec.horizon) - oracle.gain(spec.horizon)));
    say(
        c,
        &format!(
            "wrote {} gains; ||L_T^D - L_T^KF||_2 = {terminal:.4e}",
            bank.gains.len()
        ),
    );
    Ok(EXIT_OK)
}

fn lqg(cfg: &ConfigFile, c: &Common) -> Result<i32> {
    let system = cfg.system()?;
    let weights = cfg.weights()?;
    let spec = cfg.input_spec(&system, c.seed)?;
    let x0s = cfg
        .lqr_initial_states(system.n())?
        .unwrap_or_else(|| canonical_initial_states(system.n()));
    let dataset = generate_open_loop_dataset(&system, &spec)?;
    let k_d = lqr_gain_from_data(&dataset, &weights, &x0s, None)?.k;
    let bank = filter_bank_from_data(&dataset)?;
    let cl_seed = derive_seed(spec.seed, &[crate::rng::domain::CLOSED_LOOP]);
    let cl = collect_closed_loop_dataset(&system, &k_d, &bank, cfg.closed_loop.episodes, cl_seed)?;
    let est = lqg_gain_from_data(&cl, &k_d, &bank)?;
    let oracle = lqg_static_gain(&system, &weights)?;
    let error = linalg::spectral_norm(&(&est.k - &oracle.k));

    let eval_horizon = cfg.closed_loop.eval_horizon;
    let eval_seed = derive_seed(spec.seed, &[crate::rng::domain::COST]);
    let (x0, noise) = episode_conditions(&system, eval_horizon, eval_seed)?;
    let warm = Box::new(SeparatedLqg::new(k_d.clone(), &bank));
    let static_run = run_static_lqg(&est.k, system.n(), &system, warm, &x0, &noise)?;
    let mut reference = RecursiveLqg::new(&system, lqr_gain(&system, &weights)?.k, FilterKind::TimeVarying);
    let reference_run = run_closed_loop(&system, &mut reference, &x0, &noise)?;
    let static_cost = static_run.running_cost(&weights.q_x, &weights.r_u, eval_horizon);
    let reference_cost = reference_run.running_cost(&weights.q_x, &weights.r_u, eval_horizon);

    ensure_out(&c.out)?;
    config::write_matrix_csv(&c.out.join("K_lqg.csv"), &est.k)?;
    config::write_matrix_csv(&c.out.join("K_lqg_oracle.csv"), &oracle.k)?;
    config::export_closed_loop_dataset(&cl, &c.out.join("closed_loop"))?;
    config::write_key_values(
        &c.out.join("lqg_diagnostics.csv"),
        &[
            ("N", dataset.len().to_string()),
            ("M", cl.len().to_string()),
            ("seed", spec.seed.to_string()),
            ("error_spectral", error.to_string()),
            ("c4_norm", est.c4_norm.to_string()),
            ("window_sigma_min", est.window_sigma_min.to_string()),
            ("T_eval", eval_horizon.to_string()),
            ("static_running_cost", static_cost.to_string()),
            ("recursive_running_cost", reference_cost.to_string()),
        ],
    )?;
    say(
        c,
        &format!(
            "K_lqg_d = {:?}\nK_lqg   = {:?}\nerror   = {error:.4e}\nrunning cost over {eval_horizon} steps: static {static_cost:.4}, recursive {reference_cost:.4}",
            est.k.as_slice(),
            oracle.k.as_slice()
        ),
    );
    Ok(EXIT_OK)
}

fn reproduce(cfg: &ConfigFile, c: &Common) -> Result<i32> {
    let experiment = cfg.experiment_config(c.seed, c.workers)?;
    let thresholds = cfg.thresholds()?;
    let report = run_convergence(&experiment)?;
    ensure_out(&c.out)?;
    emit_report(&report, &c.out, c.format.into())?;
    say(c, digest(&report).trim_end());
    let outcomes = check_thresholds(&report, &thresholds);
    let mut failed = false;
    for o in &outcomes {
        say(
            c,
            &format!("{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail),
        );
        failed |= !o.passed;
    }
    Ok(if failed { EXIT_THRESHOLD } else { EXIT_OK })
}

fn lemma_check(cfg: &ConfigFile, c: &Common) -> Result<i32> {
    let l = &cfg.lemma;
    let seed = match c.seed {
        Some(s) => s,
        None => cfg.experiment.as_ref().map_or(0, |e| e.seed),
    };
    let product = lemma_check_gaussian_product(
        l.product_n,
        l.product_m,
        l.product_samples,
        l.delta,
        l.product_reps,
        seed,
    )?;
    let singular = lemma_check_singular_values(l.singular_n, l.singular_samples, l.delta, l.singular_reps, seed)?;
    ensure_out(&c.out)?;
    match c.format {
        Format::Json => {
            let value = serde_json::json!({ "product": product, "singular_values": singular });
            let path = c.out.join("lemma.json");
            let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))? + "\n";
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Format::Csv => {
            config::write_key_values(
                &c.out.join("lemma.csv"),
                &[
                    ("delta", l.delta.to_string()),
                    ("product_frequency", product.frequency.to_string()),
                    ("product_threshold", product.threshold.to_string()),
                    ("product_max_ratio", product.max_ratio.to_string()),
                    ("product_reps", product.reps.to_string()),
                    ("singular_freq_min", singular.freq_min.to_string()),
                    ("singular_freq_max", singular.freq_max.to_string()),
                    ("singular_reps", singular.reps.to_string()),
                ],
            )?;
        }
    }
    let ok = product.frequency <= l.delta && singular.freq_min <= l.delta && singular.freq_max <= l.delta;
    say(
        c,
        &format!(
            "product bound: violation frequency {} (delta {})\nsingular values: freq_min {} freq_max {}",
            product.frequency, l.delta, singular.freq_min, singular.freq_max
        ),
    );
    Ok(if ok { EXIT_OK } else { EXIT_THRESHOLD })
}

pub fn dispatch(cli: &Cli) -> i32 {
    let c = cli.command.common();
    init_logging(c);
    let cfg = match ConfigFile::load(&c.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_VALIDATION;
        }
    };
    install_workers(c.workers);
    let result = match &cli.command {
        Command::Simulate(c) => simulate(&cfg, c),
        Command::Lqr(c) => lqr(&cfg, c),
        Command::Kf(c) => kf(&cfg, c),
        Command::Lqg(c) => lqg(&cfg, c),
        Command::ReproduceFig1(c) => reproduce(&cfg, c),
        Command::LemmaCheck(c) => lemma_check(&cfg, c),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                EXIT_VALIDATION
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

/// Parses `args` and runs the selected subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}
