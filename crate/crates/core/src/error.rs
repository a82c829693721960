use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("singular matrix (pivot {pivot:e} at column {column})")]
    SingularMatrix { column: usize, pivot: f64 },
    #[error("covariate column {0} is constant across the pooled samples")]
    DegenerateColumn(usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("coordinate {index} diverged (|value| = {value:e})")]
    DivergedUpdate { index: usize, value: f64 },
    #[error("solver did not converge within {0} iterations")]
    MaxIterationsExceeded(usize),
    #[error("joint estimating equations have a singular Jacobian even with damping")]
    SingularJacobian,
    #[error("no tuning value produced a converged fit on any fold")]
    AllFitsFailed,
    #[error("unsupported sampling design: {0}")]
    UnsupportedDesign(String),
}
