use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, OwlError>;

#[derive(Debug, Error)]
pub enum OwlError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("state error: {0}")]
    State(String),
    #[error("version error: {0}")]
    Version(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl OwlError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        OwlError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            OwlError::Config(_) | OwlError::Argument(_) => 2,
            OwlError::Numeric(_) => 4,
            _ => 3,
        }
    }
}
