use thiserror::Error;

/// Errors produced by the estimation pipeline and its supporting modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Innovation variance was not strictly positive; the filter must be reset.
    #[error("numerical degeneracy at sample {k}: innovation variance {s}")]
    Degenerate { k: u64, s: f64 },

    #[error("non-finite value in {what} at sample {k}")]
    NonFinite { k: u64, what: &'static str },

    #[error("residual window not ready ({count} of {m} residuals)")]
    NotReady { count: u64, m: usize },

    /// Reconstruction refused because the estimate was flagged invalid.
    #[error("estimate flagged invalid")]
    InvalidEstimate,

    #[error("simulation failed to converge at step {step}")]
    Simulation { step: usize },

    #[error("stream error at sample {index}: {reason}")]
    Stream { index: u64, reason: String },

    #[error("processing unit is in a failed state; reset required")]
    Failed,

    /// Malformed input data; `row` counts lines from 1 including the header.
    #[error("data error at row {row}: {reason}")]
    Data { row: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        match e.position() {
            Some(pos) => Error::Data { row: pos.line() as usize, reason: e.to_string() },
            None => Error::Io(e.to_string()),
        }
    }
}
