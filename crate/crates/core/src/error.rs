use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid value for `{field}`: {message}")]
    Invariant { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("undefined state: {0}")]
    UndefinedState(String),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("kernel pole at omega = {omega} rad/s")]
    Pole { omega: f64 },

    #[error("grid too coarse: {0}")]
    RefineGrid(String),

    #[error("not enough data: {points} points for {params} parameters")]
    Underdetermined { points: usize, params: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("unknown experiment `{name}` (valid: {valid})")]
    UnknownExperiment { name: String, valid: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invariant(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Invariant {
            field: field.into(),
            message: message.into(),
        }
    }
}
