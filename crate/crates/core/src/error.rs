use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed binary depth-map payload.
    #[error("depth map format error at byte {offset}: {message}")]
    DepthFormat { offset: usize, message: String },

    /// Malformed JSONL record.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structurally invalid document (lookup table, manifest).
    #[error("format error: {0}")]
    Format(String),

    /// Input violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A keyed lookup (image id, reference threshold) failed.
    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for errors caused by unreadable or malformed input files.
    pub fn is_format(&self) -> bool {
        matches!(
            self,
            Error::Io { .. } | Error::DepthFormat { .. } | Error::Parse { .. } | Error::Format(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
