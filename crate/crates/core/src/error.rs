use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration has {} problem(s):\n  {}", .0.len(), .0.join("\n  "))]
    Schema(Vec<String>),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn dim_mismatch(what: &str, expected: usize, got: usize) -> Error {
    Error::Input(format!("{what}: expected dimension {expected}, got {got}"))
}
