use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("missing input: {}", .0.display())]
    Missing(PathBuf),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Missing(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<iohunter::Error> for CliError {
    fn from(e: iohunter::Error) -> Self {
        use iohunter::Error as E;
        match e {
            E::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => CliError::Missing(path),
            E::Config(_)
            | E::Signature { .. }
            | E::Unlabeled { .. }
            | E::ConflictingLabel(_)
            | E::TooManyMalformed { .. }
            | E::Format(_)
            | E::NoPositives => CliError::Validation(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
