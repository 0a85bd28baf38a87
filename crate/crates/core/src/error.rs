use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = OdrError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum OdrError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: invalid field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate case_id `{0}`")]
    DuplicateCaseId(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training data contains a single class; both outcomes are required")]
    SingleClass,

    #[error("non-finite value in feature column `{column}`")]
    NonFinite { column: String },

    #[error("schema mismatch: model expects {expected}, features carry {found}")]
    SchemaMismatch { expected: String, found: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    Version { expected: u32, found: u32 },

    #[error("model file is malformed: {0}")]
    Model(String),

    #[error("model lacks per-node cover statistics; retrain with cover recording enabled")]
    MissingCover,

    #[error("empty split `{0}`")]
    EmptySplit(String),
}

impl OdrError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OdrError::Io {
            path: path.into(),
            source,
        }
    }
}
