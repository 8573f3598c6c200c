use std::path::PathBuf;

use crate::constraints::{Relation, SamplePair};

/// Errors raised anywhere in the clustering pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's contract.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Configuration values outside their admissible ranges.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Two partitions or arrays that must cover the same samples do not.
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),

    /// A constraint between a sample and itself.
    #[error("constraint on self-pair ({0}, {0})")]
    SelfPair(usize),

    /// A new oracle answer disagrees with what the closure already implies.
    #[error(
        "contradiction: ({}, {}) answered {attempted} but the store already holds {existing} for ({}, {})",
        .pair.0, .pair.1, .conflict.0, .conflict.1
    )]
    Contradiction {
        pair: SamplePair,
        attempted: Relation,
        conflict: SamplePair,
        existing: Relation,
    },

    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),

    #[error("query budget exhausted after {0} queries")]
    BudgetExhausted(usize),

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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
