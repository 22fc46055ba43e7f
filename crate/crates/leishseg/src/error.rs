//! Crate-wide error type with a stable mapping to process exit codes.

use std::path::PathBuf;

/// Errors produced anywhere in the segmentation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Tensor shape or layout violation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Bad configuration: unknown key, unparsable value, inconsistent settings.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset or file-content problem (missing pairs, bad label values, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Non-finite values or a failed numeric contract during training.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Checkpoint file malformed or incompatible with the requested run.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    /// Exit code contract: 0 ok, 1 usage/config, 2 data error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Shape(_) | Error::Data(_) | Error::Checkpoint(_) => 2,
            Error::Io { .. } | Error::Image { .. } => 2,
            Error::Numeric(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
