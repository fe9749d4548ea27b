use thiserror::Error;

/// Errors surfaced by mode-set construction, Fock-space operations,
/// operator assembly, solvers and experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("infrared node rejected: radial node {0} is not strictly positive")]
    InfraredNode(f64),

    #[error("point {0:?} lies outside the particle domain")]
    OutsideDomain(Vec<f64>),

    #[error(
        "truncation too small: tail mass {tail:.3e} exceeds {tol:.3e}; \
         mean occupation {mean_occupation:.3}, required n_max >= {required_n_max}"
    )]
    UnderTruncated {
        tail: f64,
        tol: f64,
        mean_occupation: f64,
        required_n_max: usize,
    },

    #[error("symbol degree p+q = {degree} exceeds configured maximum {max}")]
    DegreeOverflow { degree: usize, max: usize },

    #[error("state is not normalized: |norm - 1| = {0:.3e}")]
    NotNormalized(f64),

    #[error("shift -xi = {minus_xi} is not below the spectrum (lowest eigenvalue ~ {lambda0})")]
    IndefiniteShift { minus_xi: f64, lambda0: f64 },

    #[error("solver did not converge within {iterations} iterations (best residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("operator budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("assembled operator failed the hermiticity check: deviation {0:.3e}")]
    NotHermitian(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;
