use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ground set of {n} elements exceeds the limit of {limit} for {what}")]
    Capacity { what: &'static str, n: usize, limit: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("linear program is infeasible: {0}")]
    Infeasible(String),

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("numeric breakdown in simplex: {0}")]
    Numeric(String),

    #[error("claimed balance {claimed} exceeds estimated balance {estimated:.6} of element {element}")]
    BalanceViolated { element: usize, claimed: f64, estimated: f64 },

    #[error("{0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
