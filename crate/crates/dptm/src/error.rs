//! Error type shared by every module in the crate.

use thiserror::Error;

/// Unified error for configuration, dimension, indexing, ordering,
/// validation, and I/O failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of contract. The message names the field.
    #[error("configuration error: {0}")]
    Config(String),

    /// Two operands (or an operand and a declared size) disagree in shape.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A timestep, class, or domain index is outside its valid range.
    #[error("index out of range in {context}: {index} (limit {limit})")]
    Index {
        context: &'static str,
        index: usize,
        limit: usize,
    },

    /// A reverse-process step was requested with a non-decreasing pair.
    #[error("step ordering violated: t={t} must exceed t_prev={t_prev}")]
    Ordering { t: usize, t_prev: usize },

    /// Input data violates a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// An artifact on disk is malformed or inconsistent with its sidecar.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn artifact(msg: impl Into<String>) -> Self {
        Error::Artifact(msg.into())
    }
}
