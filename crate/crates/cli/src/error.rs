use std::process::ExitCode;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] locostat::Error),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("writing CSV: {0}")]
    Csv(#[from] csv::Error),

    #[error("writing JSON: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 3 when the exact oracle fails.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(locostat::Error::Numerical { .. } | locostat::Error::OracleTooLarge { .. }) => ExitCode::from(3),
            _ => ExitCode::from(2),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
