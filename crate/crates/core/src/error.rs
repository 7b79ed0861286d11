use thiserror::Error;

use crate::linreg::RegressionError;

pub type Result<T, E = SperlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SperlError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("index out of range: {0}")]
    Range(String),

    #[error("structural mismatch: {0}")]
    Structure(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("stale or mismatched dependency: {0}")]
    Dependency(String),

    #[error("path enumeration needs more than {cap} leaves")]
    Capacity { cap: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("environment failure: {0}")]
    Environment(String),

    #[error("regression failed at iteration {iteration}: {source}")]
    Fit {
        iteration: usize,
        #[source]
        source: RegressionError,
    },

    #[error(transparent)]
    Regression(#[from] RegressionError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
