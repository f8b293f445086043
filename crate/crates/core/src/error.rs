use thiserror::Error;

/// Errors raised by the risk-sensitive RL toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A scalar parameter lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    /// A caller-supplied object (policy, episode, ...) broke its contract.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// Exhaustive enumeration would exceed the configured size cap.
    #[error("oracle too large: {what} exceeds cap of {cap}")]
    OracleTooLarge { what: String, cap: u64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid_mdp(msg: impl Into<String>) -> Self {
        Error::InvalidMdp(msg.into())
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::InvalidDistribution(_) => "invalid_distribution",
            Error::InvalidMdp(_) => "invalid_mdp",
            Error::Contract(_) => "contract",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::OracleTooLarge { .. } => "oracle_too_large",
            Error::Parse { .. } => "parse",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
