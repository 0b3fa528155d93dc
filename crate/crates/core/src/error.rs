use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A time at or beyond the model horizon was queried.
    #[error("time {time} is not before the horizon {horizon}")]
    HorizonViolation { time: f64, horizon: f64 },

    /// A point, vector or parameter is outside the valid domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition of an operation was not met.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A rate function fails the integrability requirement of the
    /// ultraboundedness criterion.
    #[error("inadmissible rate function: {0}")]
    InadmissibleRate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
