use oamturb_core::Error as CoreError;
use thiserror::Error;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("numerical convergence failure: {0}")]
    Convergence(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Config(_) => 3,
            CliError::Convergence(_) => 4,
            CliError::Core(e) => match e {
                CoreError::InvalidGrid(_)
                | CoreError::InvalidParameter(_)
                | CoreError::ShapeMismatch { .. }
                | CoreError::Parse(_) => 3,
                CoreError::Quadrature { .. } => 4,
                _ => 1,
            },
            CliError::Io(_) => 1,
        }
    }
}
