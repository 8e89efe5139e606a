use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable file {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("unsupported encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("zero-length audio")]
    EmptyAudio,

    #[error("invalid sample rate {0}")]
    InvalidRate(f64),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset contains a single class")]
    SingleClass,

    #[error("too few feature vectors: need at least {needed}, got {got}")]
    TooFewVectors { needed: usize, got: usize },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("model version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("missing model for task {0}")]
    MissingModel(String),

    #[error("metadata: {0}")]
    Metadata(String),

    #[error("duplicate recording id {0:?}")]
    DuplicateId(String),

    #[error("correlation undefined for constant input")]
    ConstantInput,

    #[error("fewer groups ({groups}) than folds ({folds})")]
    TooFewGroups { groups: usize, folds: usize },

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
