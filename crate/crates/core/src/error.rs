use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("symbol {symbol} at position {position} is outside the alphabet [0:{max}]")]
    SymbolOutOfRange {
        position: usize,
        symbol: usize,
        max: usize,
    },

    #[error("state space of {required} states exceeds the cap of {cap}")]
    StateSpaceTooLarge { required: u128, cap: usize },

    #[error("unknown function kind `{0}`")]
    UnknownKind(String),

    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("no capacity value supplied for cut {0:?}")]
    MissingCutValue(Vec<usize>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
