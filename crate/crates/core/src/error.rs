use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the graphsent library.
///
/// Variants fall into two families: input problems (bad files, bad
/// configuration, inconsistent shapes) and computational failures (divergence,
/// separation, singular systems). [`Error::is_input`] tells them apart so that
/// front ends can map them onto different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate node id {0}")]
    DuplicateId(u64),

    #[error("unknown node id {0}")]
    UnknownId(u64),

    #[error("unknown school/year: {0}")]
    UnknownStratum(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("insufficient labeled cases in {stratum}: need {needed}, have {available}")]
    InsufficientLabels {
        stratum: String,
        needed: usize,
        available: usize,
    },

    #[error("training diverged at epoch {epoch} (loss = {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("complete or quasi-complete separation detected: {0}")]
    Separation(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },
}

impl Error {
    /// True for errors caused by the caller's inputs rather than numerics.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::DuplicateId(_)
                | Error::UnknownId(_)
                | Error::UnknownStratum(_)
                | Error::Shape(_)
                | Error::NonFinite { .. }
                | Error::Invalid(_)
                | Error::InsufficientLabels { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
