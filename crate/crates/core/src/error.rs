//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide error enumeration.
///
/// Three failure classes cover every fallible operation: arguments that
/// violate a precondition (bad grids, out-of-range parameters, mismatched
/// lengths), inputs too small for a statistic to mean anything, and exact
/// enumerations whose state space would exceed the configured budget.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough data to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An exact enumeration would touch more bits than the budget allows.
    #[error("enumeration budget exceeded: {bits} bits referenced, budget is {budget}")]
    BudgetExceeded { bits: usize, budget: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn insufficient(msg: impl Into<String>) -> Self {
        Error::InsufficientData(msg.into())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
