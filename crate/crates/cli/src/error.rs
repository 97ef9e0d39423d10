use std::io;

use thiserror::Error;
use warden_core::ingest::IngestError;
use warden_core::triage::TriageError;
use warden_server::journal::JournalError;
use warden_server::{ServeError, StoreError};

/// Exit status 1: the request was understood but rejected.
pub const EXIT_VALIDATION: u8 = 1;
/// Exit status 2: reading or writing state failed.
pub const EXIT_IO: u8 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        CliError::Validation(message.into())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Journal(JournalError::Corrupt { .. }) => {
                CliError::Io(format!("{e} (rerun with --repair-journal to cut it back to the last complete event)"))
            }
            StoreError::Journal(_) => CliError::Io(e.to_string()),
            StoreError::NotFound(_) | StoreError::Conflict(_) | StoreError::Invalid(_) => {
                CliError::Validation(e.to_string())
            }
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TriageError> for CliError {
    fn from(e: TriageError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ServeError> for CliError {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Store(s) => s.into(),
            ServeError::BindFailure { .. } => CliError::Io(e.to_string()),
        }
    }
}
