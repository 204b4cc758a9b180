use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("column {index} has zero norm")]
    ZeroColumn { index: usize },
    #[error("enumeration of {count:.3e} subsets exceeds the limit of {limit:.0e}")]
    TooManySubsets { count: f64, limit: f64 },
    #[error("matrix is rank deficient: smallest singular value {sigma_min:.3e} (largest {sigma_max:.3e})")]
    RankDeficient { sigma_min: f64, sigma_max: f64 },
    #[error("null space of the operator is trivial")]
    TrivialNullSpace,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
