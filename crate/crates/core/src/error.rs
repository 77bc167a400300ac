use thiserror::Error;

/// Errors raised across the laboratory. Variants map onto the CLI exit-code
/// classes via [`Error::is_config`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rate function unbounded at x = {x}: no finite optimiser with |theta| <= 1e6")]
    UnboundedRate { x: f64 },

    #[error("weight domain error at ({row}, {col}): {detail}")]
    WeightDomain { row: usize, col: usize, detail: String },

    #[error("problem too large for exact mode: {0}")]
    TooLarge(String),

    #[error("partition function diverges: {0}")]
    Divergent(String),

    #[error("variational objective is not coercive: {0}")]
    NonCoercive(String),

    #[error("model not admissible for the scalar reduction: {0}")]
    Admissibility(String),

    #[error("chain became unstable at beta = {beta:?}, n = {n}: {detail}")]
    Instability { beta: Vec<f64>, n: usize, detail: String },

    #[error("unreliable Monte Carlo estimate (ess = {ess:.1}): psi_hat = {psi_hat}, stderr = {stderr}")]
    Unreliable { psi_hat: f64, stderr: f64, ess: f64 },

    #[error("importance weights collapsed at every candidate step: {0}")]
    StepSize(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by malformed input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Argument(_) | Error::Config(_) | Error::Json(_) | Error::Csv(_) | Error::Io(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
