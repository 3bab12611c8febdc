use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Shape(String),

    #[error("index {index} out of range for width {width}")]
    Index { index: usize, width: usize },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("unit id {id} outside vocabulary of size {size}")]
    Vocabulary { id: usize, size: usize },

    #[error("sequence of length {len} exceeds the {max} available positions")]
    Length { len: usize, max: usize },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("verbalizer capacity exceeded: {labels} labels for {usable} usable units")]
    Capacity { labels: usize, usable: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("backbone mismatch: expected hash {expected:016x}, found {found:016x}")]
    BackboneMismatch { expected: u64, found: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
