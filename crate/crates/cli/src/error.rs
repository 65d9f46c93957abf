use std::path::Path;

use thiserror::Error;

/// Failure of a command, classified by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn context(self, what: &str) -> CliError {
        match self {
            CliError::Usage(m) => CliError::Usage(format!("{what}: {m}")),
            CliError::Data(m) => CliError::Data(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> CliError {
        CliError::Data(format!("{}: {e}", path.display()))
    }
}

impl From<odcfmsv_core::Error> for CliError {
    fn from(e: odcfmsv_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Attaches command context to core errors.
pub(crate) trait Context<T> {
    fn ctx(self, what: &str) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn ctx(self, what: &str) -> CliResult<T> {
        self.map_err(|e| e.into().context(what))
    }
}
