use thiserror::Error;

/// Reasons the threshold decoders can refuse to produce an estimate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("no candidate set passes every threshold check")]
    NoValidSet,
    #[error("{count} candidate sets pass every threshold check")]
    Ambiguous { count: usize },
    #[error("enumeration of {count} candidates exceeds the limit of {limit}")]
    TooLarge { count: f64, limit: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("decoding failed: {0}")]
    Decode(#[from] DecodeError),
    #[error("stage failure: {0}")]
    StageFailure(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
