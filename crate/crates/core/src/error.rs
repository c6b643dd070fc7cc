use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid demand model: {0}")]
    InvalidDemand(String),
    #[error("invalid constraint set: {0}")]
    InvalidConstraints(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("projection did not converge after {iterations} cycles (last change {change:e})")]
    ProjectionDidNotConverge { iterations: usize, change: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("batch size mismatch: expected {expected} gradients, got {got}")]
    BatchSize { expected: usize, got: usize },
    #[error("initial inventory is outside the constraint set")]
    InfeasibleStart,
    #[error("transition solver contract violated: {0}")]
    TransitionContract(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("linear program: {0}")]
    Lp(String),
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
