use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
///
/// Solver outcomes that are part of normal operation (an attack that is
/// infeasible, a solver that ran out of iterations) are reported through
/// [`crate::convex::SocOutcome`] rather than through this type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("arm index {arm} out of range for {n_arms} arms")]
    ArmIndex { arm: usize, n_arms: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("{path}: line {line}, column {column}: {message}")]
    Load {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: u64) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad configuration or unreadable inputs,
    /// as opposed to failures while a simulation was running.
    pub fn is_configuration(&self) -> bool {
        match self {
            Error::Config(_)
            | Error::InvalidInput(_)
            | Error::Load { .. }
            | Error::Format { .. }
            | Error::Io { .. } => true,
            Error::AtStep { source, .. } => source.is_configuration(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
