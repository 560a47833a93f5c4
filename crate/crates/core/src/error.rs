use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GiscError>;

#[derive(Debug, Error)]
pub enum GiscError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Malformed HSIB container or manifest. `offset` is the byte position
    /// where decoding stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data pairing error: {0}")]
    Pairing(String),

    #[error("source offset ({dx}, {dy}) is outside the memory-effect range: {reason}")]
    OutOfMemoryEffect { dx: i64, dy: i64, reason: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl GiscError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GiscError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        GiscError::Format {
            offset,
            message: message.into(),
        }
    }
}
