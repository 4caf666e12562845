use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Lab(#[from] majorana_lab::Error),
    /// A check ran to completion and did not meet its tolerance.
    #[error("check failed: {0}")]
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lab(e) if e.is_numerical() => 3,
            CliError::Check(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
