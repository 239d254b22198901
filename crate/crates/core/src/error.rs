use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the compression pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape error: {0}")]
    InputShape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("numerical failure at step {step}: {what}")]
    NumericalFailure { step: usize, what: String },

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
