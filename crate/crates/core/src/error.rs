use thiserror::Error;

/// Errors produced by the detector, the inference routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Input dimensions do not fit together (series length, window size, line vectors).
    #[error("shape error: {0}")]
    Shape(String),

    /// A parameter or index lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// The projected statistic is exactly zero, so the line decomposition is undefined.
    #[error("degenerate test statistic: the projection of the data is zero")]
    DegenerateStatistic,

    /// The truncation region carries no probability mass under the chi distribution.
    #[error("truncation region has zero chi mass (df = {df})")]
    ZeroMass { df: f64 },

    /// A region assembled from a run does not contain the point that generated it.
    #[error("inconsistent conditioning region: {0}")]
    Inconsistent(String),

    /// Malformed signal file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
