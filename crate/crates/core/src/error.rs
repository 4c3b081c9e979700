use thiserror::Error;

/// Errors raised by the numerical and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("kernel is singular at {0}")]
    Singularity(f64),
    #[error("integral does not converge: {0}")]
    Divergence(String),
    #[error("kernel has no power-law tail: {0}")]
    NoPowerTail(String),
    #[error("time step too large: kernel mass per step is {0}")]
    StepSize(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("state error: {0}")]
    State(String),
    #[error("intensity exploded: {events} events before t = {time}")]
    Explosion { events: usize, time: f64 },
    #[error("estimation failed: {0}")]
    Estimation(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
