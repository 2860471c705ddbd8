use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] tempres_core::Error),
    #[error("evaluation failed: {0}")]
    Point(String),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for bad input, 3 for numerical failures, 1 for anything else.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) | CliError::Json(_) => ExitCode::from(2),
            CliError::Numerical(_) | CliError::Point(_) => ExitCode::from(3),
            CliError::Io(_) | CliError::Csv(_) => ExitCode::from(1),
        }
    }
}
