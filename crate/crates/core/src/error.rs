use std::path::PathBuf;

use thiserror::Error;

use crate::llm::LlmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId { path: PathBuf, line: usize, id: String },

    #[error("unknown {kind} id {id:?}")]
    DanglingId { kind: &'static str, id: String },

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unresolved placeholder {0}")]
    UnresolvedPlaceholder(String),

    #[error(transparent)]
    Llm(#[from] LlmError),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True when the failure came from a remote service rather than from the
    /// caller's inputs.
    pub fn is_external(&self) -> bool {
        matches!(self, Error::Llm(_))
    }
}
