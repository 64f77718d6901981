use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    BadInput(String),
    #[error("{0}")]
    Aborted(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::BadInput(_) => 2,
            CliError::Aborted(_) => 3,
            CliError::Failed(_) => 1,
        }
    }

    pub fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::BadInput(format!("{context}: {e}"))
    }

    pub fn failed(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        CliError::Failed(format!("{context}: {e}"))
    }
}
