use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum IngestError {
    /// Transient failure; retried with backoff before becoming
    /// `SourceUnavailable`.
    #[error("retryable: {0}")]
    Retryable(String),

    #[error("source unavailable: {0}")]
    SourceUnavailable(String),

    #[error("malformed payload for {coordinate}: {message}")]
    Parse { coordinate: String, message: String },

    #[error("cache miss: {0}")]
    NotFound(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] nowcast_core::Error),
}

impl IngestError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<IngestError> for nowcast_core::Error {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Core(inner) => inner,
            other => nowcast_core::Error::Source(other.to_string()),
        }
    }
}
