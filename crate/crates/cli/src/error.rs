use std::process::ExitCode;

use adaptive_survey_core::Error as CoreError;
use adaptive_survey_service::ServiceError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Service(#[from] ServiceError),

    /// Something outside our inputs went wrong: output not writable, port taken.
    #[error("{0}")]
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) => core_code(e),
            CliError::Service(ServiceError::Core(e)) => core_code(e),
            CliError::Service(ServiceError::Config(_)) => 1,
            CliError::Service(_) | CliError::Environment(_) => 3,
        })
    }
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Auth(_) | CoreError::Transport(_) => 2,
        CoreError::Io(_) => 3,
        _ => 1,
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Environment(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(CoreError::Json(e))
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
