use std::path::PathBuf;

use odr_core::OdrError;
use odr_service::ServiceError;
use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("case `{0}` not found in the corpus")]
    CaseNotFound(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error(transparent)]
    Core(#[from] OdrError),

    #[error(transparent)]
    Service(#[from] ServiceError),
}

#[derive(Serialize)]
struct Line<'a> {
    error: Body<'a>,
}

#[derive(Serialize)]
struct Body<'a> {
    code: &'a str,
    message: String,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::CaseNotFound(_) => "not_found",
            CliError::Io { .. } | CliError::Csv { .. } => "io",
            CliError::Core(e) => match e {
                OdrError::Io { .. } => "io",
                OdrError::Parse { .. } | OdrError::DuplicateCaseId(_) => "parse",
                OdrError::Config(_) => "config",
                OdrError::Version { .. } | OdrError::Model(_) | OdrError::SchemaMismatch { .. } => "model",
                _ => "invalid_input",
            },
            CliError::Service(_) => "service",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// `{"error":{"code":..,"message":..}}` on one line.
    pub fn to_line(&self) -> String {
        serde_json::to_string(&Line {
            error: Body {
                code: self.code(),
                message: self.to_string().replace('\n', " "),
            },
        })
        .expect("error line serializes")
    }
}
