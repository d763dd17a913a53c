use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the factorization library.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions are incompatible.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// Invalid solver or experiment configuration.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The requested operation is not defined for this model variant.
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),

    /// Degenerate input (constant row or column, empty problem, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Factor violates the feasibility set it is supposed to live in.
    #[error("infeasible factor: {0}")]
    Infeasible(String),

    /// A matrix that must have full rank does not.
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    /// No observed entries where at least one is required.
    #[error("empty mask: {0}")]
    EmptyMask(String),

    /// Numerical breakdown (non-finite values, bound violation beyond round-off).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Synthetic generation could not produce an H passing the SSC check.
    #[error("no SSC-passing H after {attempts} attempts (seed {seed})")]
    SscRegeneration { seed: u64, attempts: usize },

    /// Malformed file content.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
