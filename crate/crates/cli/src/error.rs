use poisson_ident_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("output encoding: {0}")]
    Encode(String),
}

impl CliError {
    /// 2 configuration, 3 convergence, 4 infeasible code parameters.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(CoreError::Domain(_)) => 2,
            CliError::Core(CoreError::Convergence { .. }) => 3,
            CliError::Core(CoreError::Infeasible(_) | CoreError::EnumerationGuard(_)) => 4,
            _ => 1,
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Encode(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Encode(e.to_string())
    }
}
