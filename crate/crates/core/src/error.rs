use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {index} out of range for network with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),

    #[error("column {0} not found")]
    MissingColumn(String),

    #[error("invalid value in column {column} at row {row}: {reason}")]
    InvalidCell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("length mismatch: {what} has {found} entries, expected {expected}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("policy is not invertible at unit {unit}: {reason}")]
    NonInvertiblePolicy { unit: usize, reason: String },

    #[error("analytic weight unavailable: {0}")]
    AnalyticWeightUnavailable(String),

    #[error("invalid fold plan: {0}")]
    InvalidFolds(String),

    #[error("invalid learner: {0}")]
    InvalidLearner(String),

    #[error("empty learner library")]
    EmptyLibrary,

    #[error("non-finite estimating function value at unit {unit}")]
    NonFiniteEif { unit: usize },

    #[error("fluctuation did not converge after {iterations} iterations (score {score:e})")]
    FluctuationDiverged { iterations: usize, score: f64 },

    #[error("estimation failed: {0}")]
    EstimationFailed(String),

    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),

    #[error("efficiency bound unavailable: {0}")]
    BoundUnavailable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
