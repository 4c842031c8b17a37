use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("malformed program: {0}")]
    MalformedProgram(String),
    #[error("invalid solver tolerance {0} (must lie in (0, 1e-2])")]
    InvalidTolerance(f64),
    #[error("backend rejected the program: {0}")]
    Backend(String),
}
