use thiserror::Error;

use crate::diffcore::DiffError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema error in record {record}: {message}")]
    Schema { record: usize, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("initialization error: {0}")]
    Initialization(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("every symptom is already known; the dialogue must diagnose")]
    Exhausted,
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("enumeration guard: {0}")]
    TooLarge(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
