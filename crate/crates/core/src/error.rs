use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Ingest {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {message}")]
    Training {
        epoch: usize,
        batch: usize,
        message: String,
    },

    #[error("gradient check failed: {0}")]
    GradientCheck(String),

    #[error("keyword expansion failed: {0}")]
    Expansion(String),

    #[error("malformed artifact: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn ingest(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Ingest {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn contract(message: impl Into<String>) -> Self {
        Error::Contract(message.into())
    }

    pub(crate) fn format(message: impl Into<String>) -> Self {
        Error::Format(message.into())
    }
}
