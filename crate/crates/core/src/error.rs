use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid channel: {0}")]
    InvalidChannel(String),

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("value {value} outside of {expected}")]
    OutOfRange { value: f64, expected: &'static str },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid code specification: {0}")]
    InvalidCodeSpec(String),

    #[error("channel file: {0}")]
    ChannelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
