use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at vector {vector}, coordinate {coord}")]
    NonFinite { vector: usize, coord: usize },

    #[error("vector {id} has zero norm and cannot be normalized")]
    ZeroVector { id: usize },

    #[error("metric {0} requires a dataset normalized to unit L2 norm")]
    MetricNotAdmissible(&'static str),

    /// A strategy or command was configured inconsistently.
    #[error("configuration error: {0}")]
    Config(String),

    /// A strategy needs an artifact (rotation, model, codebook, file) that was not supplied.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    /// True for errors a user fixes by editing configuration or producing
    /// missing inputs, as opposed to runtime failures.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::MissingArtifact(_))
    }
}
