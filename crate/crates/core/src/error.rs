use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("mapping error: {0}")]
    Mapping(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error at line {line}: {message}")]
    Validation { line: usize, message: String },

    #[error("coverage error: labels with fewer than {needed} examples: {labels:?}")]
    Coverage { needed: usize, labels: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("checkpoint incompatible: {0}")]
    Incompatible(String),

    #[error("non-finite loss at step {step} (batch examples {batch:?}): {detail}")]
    NonFinite {
        step: usize,
        batch: Vec<usize>,
        detail: String,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
