use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the synthesis routines, the simulators and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{field}`: expected {expected}, found {found}")]
    Shape {
        field: String,
        expected: String,
        found: String,
    },

    #[error("invalid covariance `{name}`: {reason}")]
    InvalidCovariance { name: String, reason: String },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error(
        "insufficient excitation: [X0; U] is {rows}x{cols} with sigma_min = {sigma_min:.3e}; \
         at least N = {required} trajectories with persistently exciting inputs are required"
    )]
    InsufficientExcitation {
        rows: usize,
        cols: usize,
        sigma_min: f64,
        required: usize,
    },

    #[error("ill-posed cost: P has eigenvalue {min_eig:.3e} below 1e-12 * {max_eig:.3e}")]
    IllPosedCost { min_eig: f64, max_eig: f64 },

    #[error("infeasible initial state: [I 0] P^(-1/2) has rank {rank} < {n}")]
    InfeasibleInitialState { rank: usize, n: usize },

    #[error(
        "degenerate trajectory: stacked state matrix has sigma_min = {sigma_min:.3e} (rank {rank} < {n}); \
         supply more or different initial states"
    )]
    DegenerateTrajectory { sigma_min: f64, rank: usize, n: usize },

    #[error(
        "insufficient data at t = {t}: Z_t is {rows}x{cols} with sigma_min = {sigma_min:.3e}; \
         need N >= {rows} and full row rank"
    )]
    InsufficientData {
        t: usize,
        rows: usize,
        cols: usize,
        sigma_min: f64,
    },

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {step:.3e})")]
    RiccatiDivergence { iterations: usize, step: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("degenerate realization: window observability matrix has sigma_min = {sigma_min:.3e}")]
    DegenerateRealization { sigma_min: f64 },

    #[error("closed loop unstable at step {step}: state norm {norm:.3e} exceeds 1e9")]
    Instability { step: usize, norm: f64 },

    #[error("closed-loop collection needs M >= n + nm + np = {required} episodes, got {got}")]
    TooFewEpisodes { required: usize, got: usize },

    #[error(
        "window matrix [U_n; Y_n] is rank deficient (sigma_min = {sigma_min:.3e}, {rows} rows); \
         collect more closed-loop episodes"
    )]
    WindowRankDeficient { sigma_min: f64, rows: usize },

    #[error("rate fit: {0}")]
    RateFit(String),

    #[error("lemma precondition violated: N = {got} but at least {required} samples are required")]
    LemmaPrecondition { required: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(field: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        Error::Shape {
            field: field.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short snake_case name used as the status of failed report cells.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidCovariance { .. } => "invalid_covariance",
            Error::InvalidSpec(_) => "invalid_spec",
            Error::InsufficientExcitation { .. } => "insufficient_excitation",
            Error::IllPosedCost { .. } => "ill_posed_cost",
            Error::InfeasibleInitialState { .. } => "infeasible_initial_state",
            Error::DegenerateTrajectory { .. } => "degenerate_trajectory",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::RiccatiDivergence { .. } => "riccati_divergence",
            Error::AssumptionViolation(_) => "assumption_violation",
            Error::DegenerateRealization { .. } => "degenerate_realization",
            Error::Instability { .. } => "instability",
            Error::TooFewEpisodes { .. } => "too_few_episodes",
            Error::WindowRankDeficient { .. } => "window_rank_deficient",
            Error::RateFit(_) => "rate_fit",
            Error::LemmaPrecondition { .. } => "lemma_precondition",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// True for errors caused by malformed input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. }
                | Error::InvalidCovariance { .. }
                | Error::InvalidSpec(_)
                | Error::Config(_)
                | Error::Io { .. }
                | Error::TooFewEpisodes { .. }
                | Error::LemmaPrecondition { .. }
        )
    }
}
