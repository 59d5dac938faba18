use std::fmt;
use std::process::ExitCode;

use egra_core::{GeneratorError, ProblemError, SolverError};

/// Errors grouped by exit code: 2 usage, 3 invalid input data, 4 internal.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Internal(_) => 4,
        })
    }

    pub fn io(what: &str, path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Internal(format!("{what} {}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Internal(m) => write!(f, "{m}"),
        }
    }
}

impl From<GeneratorError> for CliError {
    fn from(e: GeneratorError) -> Self {
        match e {
            GeneratorError::Argument(_) | GeneratorError::Model(_) => {
                CliError::Usage(e.to_string())
            }
            GeneratorError::Internal(_) => CliError::Internal(e.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(_) => CliError::Usage(e.to_string()),
            SolverError::Problem(_) | SolverError::InsufficientData { .. } => {
                CliError::Validation(e.to_string())
            }
            SolverError::Qp { .. } | SolverError::Subproblem(_) => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

/// Instance files that fail to parse or validate.
pub fn invalid_instance(path: &std::path::Path, e: ProblemError) -> CliError {
    CliError::Validation(format!("{}: {e}", path.display()))
}
