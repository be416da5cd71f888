use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the survey engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller supplied a value outside an operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// A file could not be parsed or failed validation.
    #[error("{path}: {context}: {message}")]
    Load {
        path: PathBuf,
        context: String,
        message: String,
    },

    /// An operation was invoked on a state that does not allow it.
    #[error("invalid state: {0}")]
    State(String),

    /// Configuration values are inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The LLM transport failed after exhausting retries.
    #[error("transport error: {0}")]
    Transport(String),

    /// The LLM endpoint rejected our credentials.
    #[error("authentication failed: {0}")]
    Auth(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn load(path: impl Into<PathBuf>, context: impl Into<String>, message: impl ToString) -> Self {
        Error::Load {
            path: path.into(),
            context: context.into(),
            message: message.to_string(),
        }
    }
}
