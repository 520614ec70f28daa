use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("requested an empty sample dimension")]
    EmptyDimension,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid privacy budget: {0}")]
    InvalidBudget(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("decision boundary export needs exactly 2 features, dataset has {0}")]
    UnsupportedDimension(usize),

    #[error("run record has no loss trace")]
    MissingTrace,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable identifier for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDimension => "empty_dimension",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidBudget(_) => "invalid_budget",
            Error::InvalidConfig(_) => "invalid_config",
            Error::EmptyDataset => "empty_dataset",
            Error::Diverged { .. } => "diverged",
            Error::Parse { .. } => "parse",
            Error::UnsupportedDimension(_) => "unsupported_dimension",
            Error::MissingTrace => "missing_trace",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
