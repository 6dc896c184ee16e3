use std::path::PathBuf;

use crate::relgraph::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at row {row}: {message}")]
    Format { row: usize, message: String },

    #[error("parse error at row {row}, column {col}: {message}")]
    Parse {
        row: usize,
        col: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("graph failed validation: {}", join_violations(.0))]
    InvalidGraph(Vec<Violation>),

    #[error("undefined co-occurrence energy: {0}")]
    UndefinedEnergy(String),

    #[error("pattern `{0}` already exists in the index")]
    Conflict(String),

    #[error("index integrity error: {0}")]
    Integrity(String),

    #[error("pattern `{0}` not found")]
    NotFound(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the environment (files, disks) rather than
    /// by the content handed to the library.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Integrity(_))
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
