//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor dimensions do not line up for an operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A count argument is out of range (e.g. m > N for sampling).
    #[error("invalid size for {op}: requested {requested}, available {available}")]
    Size {
        op: &'static str,
        requested: usize,
        available: usize,
    },

    /// An index is out of range.
    #[error("index {index} out of range for {op} (len {len})")]
    Index {
        op: &'static str,
        index: usize,
        len: usize,
    },

    /// A documented contract was violated (e.g. non-deterministic function
    /// handed to the gradient checker).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Malformed dataset or checkpoint bytes.
    #[error("data error at byte {offset}: {reason}")]
    Data { offset: u64, reason: String },

    /// Checkpoint exists but does not match what the caller asked for.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn data(offset: u64, reason: impl Into<String>) -> Self {
        Error::Data {
            offset,
            reason: reason.into(),
        }
    }
}
