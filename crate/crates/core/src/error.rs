use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A state or ensemble member left the finite reals.
    #[error("non-finite value at step {step}{}", member.map(|m| format!(" (member {m})")).unwrap_or_default())]
    NonFinite { step: usize, member: Option<usize> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error for key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    /// Attach a step index to a blow-up error.
    pub fn at_step(self, step: usize) -> Self {
        match self {
            Error::NonFinite { member, .. } => Error::NonFinite { step, member },
            other => other,
        }
    }

    pub fn is_blow_up(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
