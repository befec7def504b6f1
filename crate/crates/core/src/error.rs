use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(&'static str),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("insufficient design: {0}")]
    InsufficientDesign(String),

    #[error("unsupported moment order {0} (supported: 1..=5)")]
    UnsupportedOrder(usize),

    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(&'static str),

    #[error("singular fit: {0}")]
    SingularFit(&'static str),

    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("malformed ensemble file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
