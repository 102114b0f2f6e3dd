use thiserror::Error;

use crate::svm::SvmModel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value (qubit count, fold count, grid, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Caller passed arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// Dataset could not be read or lacks usable rows/columns.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// Training data cannot define a binary classifier (e.g. a single class).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A trained model has no support vectors.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// SMO ran out of iterations; `best` is the last feasible iterate.
    #[error("SMO did not converge within {iterations} iterations (KKT gap {gap:.3e})")]
    Convergence {
        iterations: usize,
        gap: f64,
        best: Box<SvmModel>,
    },

    /// A cross-validation fold failed; carries the fold index.
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Innermost error, looking through fold wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Fold { source, .. } => source.root(),
            other => other,
        }
    }
}
