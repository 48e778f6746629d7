use thiserror::Error;

use crate::train::TraceRow;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("rank deficient: requested {requested} components, effective rank is {effective}")]
    RankDeficient { requested: usize, effective: usize },

    #[error("input has energy {energy:e} outside the operator's mode span")]
    OutOfSpan { energy: f64 },

    #[error("non-finite value in layer {layer}")]
    NumericOverflow { layer: usize },

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize, trace: Vec<TraceRow> },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, found })
    }
}
