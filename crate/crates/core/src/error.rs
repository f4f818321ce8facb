use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A model or experiment parameter violates one of its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("state component out of range: {0}")]
    StateOutOfRange(String),

    #[error("state {0} is not covered by the policy")]
    MissingState(usize),

    #[error("policy file: {0}")]
    PolicyFormat(String),

    #[error("policy dimensions {found} do not match configuration {expected}")]
    DimensionMismatch { expected: String, found: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
