use std::path::PathBuf;

use thiserror::Error;

use crate::catalog::LabelId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid catalog: {0}")]
    Catalog(String),

    #[error("{0} is empty")]
    Empty(String),

    #[error("label `{0}` is not in the catalog")]
    UnknownLabel(LabelId),

    #[error("label `{0}` has no demonstrations")]
    NoDemonstrations(LabelId),

    #[error("position {position} out of range for {len} options")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("missing value for placeholder `{0}`")]
    MissingPlaceholder(&'static str),

    #[error("backend `{backend}` failed after {attempts} attempt(s): {message}")]
    Backend {
        backend: String,
        attempts: u32,
        message: String,
    },

    #[error("embedding error: {0}")]
    Embedding(String),

    #[error("clustering error: {0}")]
    Cluster(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("reduction failed: {0}")]
    Reduction(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether retrying the same request could succeed.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Backend { .. })
    }
}
