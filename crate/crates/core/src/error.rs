use irscr_conic::ConicError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("outage probability {0} outside [0, 1]")]
    InvalidBeta(f64),
    #[error("argument outside the domain: {0}")]
    Domain(String),
    #[error("matrix is not Hermitian (skew {0:e})")]
    NonHermitian(f64),
    #[error("subproblem infeasible: {0}")]
    SubproblemInfeasible(String),
    #[error("relaxed solution is not rank one (eigenvalue ratio {0:e})")]
    RankViolation(f64),
    #[error("penalty iterations stalled with residual {0:e}")]
    CcpStalled(f64),
    #[error("SINR targets cannot be met even without interference limits")]
    BootstrapInfeasible,
    #[error("wrong uncertainty model for this scheme: {0}")]
    WrongModel(&'static str),
    #[error("solver: {0}")]
    Solver(#[from] ConicError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
