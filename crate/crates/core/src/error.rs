use thiserror::Error;

/// Errors raised by the algebraic, simulation and estimation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not a derivation (Leibniz residual {residual:.3e})")]
    NotDerivation { residual: f64 },

    #[error("matrix is not an algebra automorphism (residual {residual:.3e})")]
    NotAutomorphism { residual: f64 },

    #[error("algebra is not nilpotent (lower central series stabilizes at dimension {stable_dim})")]
    NotNilpotent { stable_dim: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
