use std::path::PathBuf;

use thiserror::Error;

/// Failures surfaced to the shell, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("missing input {}: run `cvtomo {stage}` first", path.display())]
    Missing { path: PathBuf, stage: &'static str },

    #[error("unreadable input {}: {reason}", path.display())]
    BadInput { path: PathBuf, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } | CliError::BadInput { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<cvtomo::Error> for CliError {
    fn from(e: cvtomo::Error) -> Self {
        use cvtomo::Error as E;
        match e {
            E::Diverged(_) | E::EmptyData => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
