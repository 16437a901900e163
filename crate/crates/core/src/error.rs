use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("agent {agent}: action {value} is outside its action space")]
    InvalidAction { agent: usize, value: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("problem too large: {0}")]
    UnsupportedScale(String),

    #[error("stage game has no pure-strategy Nash equilibrium")]
    NoPureEquilibrium,

    #[error("contract violation: {0}")]
    ContractViolation(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
