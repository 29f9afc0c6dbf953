use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json syntax error at offset {offset}: {message}")]
    JsonSyntax { offset: usize, message: String },

    #[error("malformed document: {0}")]
    Document(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("orphan dataset file for prefix {0:?}")]
    OrphanEntry(String),

    #[error("degenerate ring: {0}")]
    DegenerateRing(String),

    #[error("incomplete cell {0}")]
    IncompleteCell(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
