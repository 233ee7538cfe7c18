use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("ingestion error in {path}: row {row}: {message}")]
    Ingest {
        path: String,
        row: usize,
        message: String,
    },

    #[error("missing coverage for load `{load_id}`: {message}")]
    Coverage { load_id: String, message: String },

    #[error("could not read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("instance too large for exhaustive enumeration: {cells} actuation cells (cap {cap})")]
    OracleCap { cells: usize, cap: usize },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("rolling-horizon consistency violated on day {day}: {message}")]
    Consistency { day: usize, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
