use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("line {line}: expected dimension {expected}, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("external service error (retryable: {retryable}): {message}")]
    External { retryable: bool, message: String },

    #[error("{} pairs left unscored after retries: {message}", pairs.len())]
    Unscored {
        pairs: Vec<(crate::ResponseId, crate::ResponseId)>,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("probability {0} outside [0, 1]")]
    Probability(f64),

    #[error("invalid action: {0}")]
    InvalidAction(String),

    #[error("invalid catalog: {0}")]
    Catalog(String),

    #[error("catalog hash mismatch: model trained on {expected}, catalog is {found}")]
    CatalogMismatch { expected: String, found: String },

    #[error("non-finite feature value at index {0}")]
    NonFinite(usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures worth retrying (network-level errors from external services).
    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::External { retryable: true, .. })
    }
}
