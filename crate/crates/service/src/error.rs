use std::path::PathBuf;

use odr_core::OdrError;
use thiserror::Error;

use crate::store::CaseStatus;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("case `{0}` not found")]
    NotFound(String),

    #[error("case `{0}` already exists")]
    Duplicate(String),

    #[error("case `{case_id}` is {status}; cannot {action}")]
    IllegalTransition {
        case_id: String,
        status: CaseStatus,
        action: &'static str,
    },

    #[error("invalid case: {0}")]
    InvalidCase(String),

    #[error("no model is loaded")]
    ModelNotReady,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path} line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] OdrError),
}

impl ServiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.into(),
            source,
        }
    }
}
