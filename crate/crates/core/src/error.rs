use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("interpolation error: {0}")]
    Interpolation(String),
    #[error("plan error: {0}")]
    Plan(String),
    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),
    #[error("regime error: {0}")]
    Regime(String),
    #[error("strategy error: {0}")]
    Strategy(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
