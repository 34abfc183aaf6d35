use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("impossible target: {0}")]
    ImpossibleTarget(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
