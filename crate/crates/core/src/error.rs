use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the demixing library.
#[derive(Debug, Error)]
pub enum DemixError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("restricted support of size {0} exceeds the probe limit")]
    ProbeTooLarge(usize),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, DemixError>;

pub(crate) fn invalid(msg: impl Into<String>) -> DemixError {
    DemixError::InvalidArgument(msg.into())
}

impl DemixError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DemixError::Io {
            path: path.into(),
            source,
        }
    }
}
