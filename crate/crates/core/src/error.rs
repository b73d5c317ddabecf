use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transform length {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("lag {lag} out of range for input of length {len}")]
    LagOutOfRange { lag: usize, len: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty correlation grid")]
    EmptyGrid,

    #[error("statistics: {0}")]
    Statistics(String),

    #[error("config {path}: line {line}: {reason}")]
    Config {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("unknown config key `{key}` in {path}")]
    UnknownConfigKey { path: String, key: String },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
