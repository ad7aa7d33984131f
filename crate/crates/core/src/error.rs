use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while reading or validating subject data.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("row {row} (id {id}): covariates for visit {visit} present but X={followup} <= t_{visit}={visit_time}")]
    CovariatePresentAfterExit {
        row: usize,
        id: String,
        visit: usize,
        followup: f64,
        visit_time: f64,
    },
    #[error("row {row} (id {id}): covariates for visit {visit} missing although X={followup} > t_{visit}={visit_time}")]
    CovariateMissingWhileAtRisk {
        row: usize,
        id: String,
        visit: usize,
        followup: f64,
        visit_time: f64,
    },
    #[error("row {row} (id {id}): follow-up time must be finite and positive, got {followup}")]
    NonPositiveFollowup {
        row: usize,
        id: String,
        followup: f64,
    },
    #[error("row {row} (id {id}): weight must be finite and positive, got {weight}")]
    NonPositiveWeight { row: usize, id: String, weight: f64 },
    #[error("row {row} (id {id}): visit {visit} has {got} covariates, expected {expected}")]
    CovariateArity {
        row: usize,
        id: String,
        visit: usize,
        got: usize,
        expected: usize,
    },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("dataset is empty")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Invalid configuration or schedule.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("visit times must be strictly increasing")]
    VisitTimesNotIncreasing,
    #[error("anchor index {anchor} must lie in [1, {k}]")]
    AnchorOutOfRange { anchor: usize, k: usize },
    #[error("tau grid must be non-empty and strictly increasing")]
    TauGridNotIncreasing,
    #[error("tau={tau} must exceed the anchor visit time t_anchor={anchor_time}")]
    TauNotAfterAnchor { tau: f64, anchor_time: f64 },
    #[error("trim level must lie in (0, 0.5), got {0}")]
    TrimOutOfRange(f64),
    #[error("number of folds must be at least 1")]
    ZeroFolds,
    #[error("unknown nuisance model `{0}` (expected km, cox, or oracle:<dgp>)")]
    UnknownNuisance(String),
    #[error("unknown data-generating mechanism `{0}`")]
    UnknownDgp(String),
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid feature term `{0}`")]
    BadTerm(String),
    #[error("polynomial degree must be 1, 2 or 3, got {0}")]
    BadDegree(usize),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

/// A nuisance model could not be fitted.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("window {window}: empty risk set")]
    EmptyRiskSet { window: usize },
    #[error("cox: Newton-Raphson did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("cox: monotone likelihood, coefficients diverge (max |beta| = {max_abs_beta:e})")]
    MonotoneLikelihood { max_abs_beta: f64 },
    #[error("cox: design matrix is rank deficient after centering")]
    RankDeficient,
    #[error("oracle: history has {got} values, expected at least {expected}")]
    OracleHistory { got: usize, expected: usize },
}

#[derive(Debug, Error)]
pub enum RegressionError {
    #[error("regression basis is rank deficient ({rank} of {columns} columns independent)")]
    RankDeficient { rank: usize, columns: usize },
    #[error("regression needs at least one row")]
    NoRows,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("fit: {0}")]
    Fit(#[from] FitError),
    #[error("regression: {0}")]
    Regression(#[from] RegressionError),
    #[error("invalid step function: {0}")]
    Step(String),
    #[error("evaluation at t={t} outside the window starting at {start}")]
    Domain { t: f64, start: f64 },
    #[error("positivity violated: zero censoring survival G(s-) at s={time}")]
    Positivity { time: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status used by the command-line front end: 2 for configuration problems,
    /// 3 for data problems and 4 for numerical / fitting failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            _ => 4,
        }
    }
}
