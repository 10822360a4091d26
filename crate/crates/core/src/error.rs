use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: line {line}: column `{column}` value {value:?} is not a number")]
    NonNumericFeature {
        path: PathBuf,
        line: usize,
        column: String,
        value: String,
    },

    #[error("{0}: file contains no data rows")]
    EmptyDataset(PathBuf),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operation `{operation}` is not supported by {kind} models")]
    Unsupported {
        operation: &'static str,
        kind: &'static str,
    },

    #[error("infeasible budget {budget}: at least {minimum} votes are required")]
    InfeasibleBudget { budget: u64, minimum: u64 },

    #[error("could not draw an initial pool containing both classes after {0} attempts")]
    SplitRetriesExhausted(usize),

    #[error("answer source: {0}")]
    AnswerSource(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
