use thiserror::Error;

/// Errors raised across the planner, environments and harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: non-SPD covariance, bad hyper-parameters, malformed config file.
    #[error("configuration error: {0}")]
    Config(String),
    /// Arguments that violate an operation's preconditions (empty input, length mismatch).
    #[error("argument error: {0}")]
    Argument(String),
    /// Numerical data that cannot be processed (NaN costs, no finite cost).
    #[error("data error: {0}")]
    Data(String),
    /// Procedural generation gave up (e.g. no collision-free start/goal).
    #[error("generation error: {0}")]
    Generation(String),
    /// A referenced log or artifact does not exist.
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
