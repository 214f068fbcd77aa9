use std::path::Path;

use qgeom::{Error, FitError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, unreadable or malformed input, unwritable output.
    #[error("{0}")]
    Usage(String),

    /// The computation itself broke down.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::Usage(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Attaches the offending file to a library error.
    pub fn at(path: &Path, err: Error) -> Self {
        match CliError::from(err) {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            CliError::Numerical(m) => CliError::Numerical(format!("{}: {m}", path.display())),
        }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        match err {
            Error::NonFinitePoint { .. } | Error::DegenerateGeometry(_) => CliError::Numerical(err.to_string()),
            _ => CliError::Usage(err.to_string()),
        }
    }
}

impl From<FitError> for CliError {
    fn from(err: FitError) -> Self {
        match err {
            FitError::NonFiniteLoss { .. } => CliError::Numerical(err.to_string()),
            FitError::Loss(e) => e.into(),
        }
    }
}
