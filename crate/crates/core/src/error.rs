//! Error types shared across the simulation stages.

use thiserror::Error;

/// Unified error type for the core library.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A configuration violates one of its documented invariants.
    /// The message names the violated invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// An operation received an argument outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A linear system was too ill-conditioned to solve reliably.
    #[error("numerical conditioning: {0}")]
    Conditioning(String),

    /// A protocol-level precondition failed (e.g. an empty selection window).
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl CoreError {
    pub fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        CoreError::Argument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
