use nowcast_core::Error;
use nowcast_ingest::IngestError;
use thiserror::Error;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOURCE: u8 = 3;
pub const EXIT_INSUFFICIENT: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error(transparent)]
    Ingest(#[from] IngestError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_CONFIG,
            CliError::Core(e) | CliError::Ingest(IngestError::Core(e)) => match e {
                Error::Config(_) => EXIT_CONFIG,
                Error::Source(_) => EXIT_SOURCE,
                Error::InsufficientData(_) => EXIT_INSUFFICIENT,
                _ => EXIT_RUNTIME,
            },
            CliError::Ingest(IngestError::SourceUnavailable(_) | IngestError::Retryable(_)) => EXIT_SOURCE,
            CliError::Ingest(_) => EXIT_RUNTIME,
        }
    }
}
