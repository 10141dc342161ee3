use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("{path}: row {row}: {message}")]
    Row {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("invalid bars in {ticker}: {}", .offending.join("; "))]
    InvalidBars {
        ticker: String,
        offending: Vec<String>,
    },

    #[error("series too short: {what} needs at least {required} bars, got {actual}")]
    TooShort {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("infeasible synthetic script: {0}")]
    InfeasibleScript(String),

    #[error("non-finite input to {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("window ending at bar {0} is not in the sequence")]
    UnknownWindow(usize),

    #[error("unknown detector {name:?}; valid names: {}", .valid.join(", "))]
    UnknownDetector {
        name: String,
        valid: Vec<&'static str>,
    },

    #[error("metric {name} = {value} is outside [0, 1]")]
    MetricOutOfRange { name: &'static str, value: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{method} on {ticker}: {source}")]
    Detector {
        method: String,
        ticker: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
