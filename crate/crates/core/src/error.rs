use std::path::PathBuf;

use crate::cohort::PatientId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{path}: duplicate (patient, date) key {patient}/{date} at rows {first_row} and {second_row}")]
    DuplicateKey {
        path: PathBuf,
        patient: String,
        date: String,
        first_row: usize,
        second_row: usize,
    },

    #[error("{path}: header mismatch: {message}")]
    Header { path: PathBuf, message: String },

    #[error("patient {0} has no baseline date")]
    MissingBaseline(PatientId),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal error: {0}")]
    Signal(String),

    #[error("non-finite value in {layer}")]
    NonFinite { layer: &'static str },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
