use opres_core::Error;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::DimensionMismatch { .. } | Error::Precondition(_) | Error::Config(_) => CliError::Config(msg),
            Error::RankDeficient { .. }
            | Error::OutOfSpan { .. }
            | Error::NumericOverflow { .. }
            | Error::Divergence { .. }
            | Error::Internal(_) => CliError::Numeric(msg),
        }
    }
}
