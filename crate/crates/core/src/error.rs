use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration violates a documented constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative kernel did not converge or a residual check failed.
    #[error("numerical error at index {index}: {message}")]
    Numerical { index: usize, message: String },

    /// An estimator received no usable data.
    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed matrix encoding: {0}")]
    Decode(String),

    /// Too many trials failed after retrying.
    #[error("experiment aborted: {0}")]
    Aborted(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Process exit status: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 1,
        }
    }
}
