use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the coding pipeline.
#[derive(Debug, Error)]
pub enum GscError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("truncated input: {0}")]
    Truncated(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),

    #[error("entropy model digest {0} is not known to the decoder")]
    DigestMismatch(String),

    #[error("corrupt data: {0}")]
    Corrupt(String),

    #[error("symbol {symbol} outside alphabet of size {alphabet}")]
    SymbolOutOfAlphabet { symbol: i64, alphabet: usize },

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("phase ordering violation: {0}")]
    PhaseOrder(String),

    #[error("no model available for C={0}")]
    MissingModel(usize),

    #[error("evaluating C={c}: {source}")]
    AtChannelCount {
        c: usize,
        #[source]
        source: Box<GscError>,
    },

    #[error("invalid utf-8 in caption")]
    Utf8(#[from] std::string::FromUtf8Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GscError>;

impl GscError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        GscError::InvalidArgument(msg.into())
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        GscError::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GscError::Io {
            path: path.into(),
            source,
        }
    }
}
