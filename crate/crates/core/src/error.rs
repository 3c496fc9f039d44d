use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("infeasible pilot assignment: {0}")]
    InfeasiblePilots(String),
    #[error("rank-deficient channel estimates at AP {ap}")]
    RankDeficient { ap: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("{what} = {value} outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Solver(#[from] crate::jappa::solver::SolverError),
    #[error(transparent)]
    Sca(#[from] crate::jappa::ScaFailure),
    #[error(transparent)]
    Config(#[from] crate::harness::config::ConfigError),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("model file: {0}")]
    Model(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
