//! Shared error type for the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates an operation's domain (bad dimensions, negative
    /// radius, out-of-bounds cell index, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A spiral address contains a digit outside 0..=6.
    #[error("invalid spiral address digit {digit} (digits must be in 0..=6)")]
    InvalidAddress { digit: u8 },

    /// Tensor or layer shapes do not chain.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A metric has no defined value for the given inputs (e.g. zero total
    /// overlap area).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// A container file is malformed. `offset` is the byte position at which
    /// the problem was detected.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// An image could not be decoded or encoded.
    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn shape_mismatch(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
