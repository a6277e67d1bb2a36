use thiserror::Error;

use crate::protocol::Step;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by zero in the field")]
    DivisionByZero,

    #[error("{0} is not an odd prime below 2^63")]
    NotPrime(u64),

    #[error("value {value} is not reduced modulo {modulus}")]
    NotReduced { value: u64, modulus: u64 },

    #[error("|{value}| exceeds the signed embedding bound {limit}")]
    EmbeddingOverflow { value: i128, limit: u64 },

    #[error("duplicate evaluation point")]
    DuplicateEvalPoint,

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("no codeword within {max_errors} errors")]
    DecodingFailure { max_errors: usize },

    #[error("field too small: q must be at least {required}")]
    FieldTooSmall { required: u128 },

    #[error("gradient entry {index} is not finite")]
    InvalidGradient { index: usize },

    #[error("aggregated value {value} exceeds the bound {bound}; overflow suspected")]
    OverflowSuspected { value: i64, bound: i64 },

    #[error("need more than {z} share holders, got {n}")]
    InsufficientClients { n: usize, z: usize },

    #[error("dealer {dealer} excluded after {complaints} complaints")]
    DealerExcluded { dealer: usize, complaints: usize },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("protocol aborted in {step:?}: {reason}")]
    ProtocolAbort { step: Step, reason: Box<Error> },

    #[error("loss is not finite")]
    InvalidLoss,

    #[error("invalid attack target: {0}")]
    InvalidAttackTarget(String),
}

impl Error {
    pub(crate) fn abort(step: Step, reason: Error) -> Self {
        Error::ProtocolAbort {
            step,
            reason: Box::new(reason),
        }
    }

    /// True when the error is, or wraps, a decoding failure.
    pub fn is_decoding_failure(&self) -> bool {
        match self {
            Error::DecodingFailure { .. } => true,
            Error::ProtocolAbort { reason, .. } => reason.is_decoding_failure(),
            _ => false,
        }
    }
}
