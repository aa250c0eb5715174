use crate::chain::StateId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    InvalidParameter(String),

    #[error("invalid state {0}")]
    InvalidState(StateId),

    #[error("chain construction failed: {0}")]
    Construction(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("numerical failure in {context}: residual {residual:e}")]
    Numerical { context: String, residual: f64 },

    #[error("chain has {states} states, above the oracle cap of {cap}")]
    OracleTooLarge { states: usize, cap: usize },

    #[error("operation requires a finite chain")]
    NotFinite,

    #[error("conditional distribution undefined: P(T_i > {theta}) = 0")]
    UndefinedConditional { theta: u64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
