use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("topology generation failed after {attempts} attempts (rho = {rho}); increase rho")]
    GenerationFailure { attempts: usize, rho: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value encountered: {0}")]
    Numeric(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("exchange protocol violation: {0}")]
    Protocol(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    /// Stable short name of the variant, used in structured error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSize(_) => "invalid_size",
            Error::GenerationFailure { .. } => "generation_failure",
            Error::Shape(_) => "shape",
            Error::Precondition(_) => "precondition",
            Error::Numeric(_) => "numeric",
            Error::Input(_) => "input",
            Error::Protocol(_) => "protocol",
            Error::Data(_) => "data",
            Error::Config(_) => "config",
            Error::Iteration { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Format { .. } => "format",
        }
    }

    /// Iteration at which a simulation failed, if known.
    pub fn iteration(&self) -> Option<usize> {
        match self {
            Error::Iteration { iteration, .. } => Some(*iteration),
            _ => None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            e @ Error::Iteration { .. } => e,
            other => Error::Iteration {
                iteration,
                source: Box::new(other),
            },
        }
    }
}
