use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix has column rank {rank}, expected {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("sensor positions do not affinely span R^{dim} (affine rank {rank})")]
    NotSpanning { dim: usize, rank: usize },

    #[error("quadratic in the emission time vanished identically; the reception times are inconsistent")]
    TheoremViolation,

    #[error("quadratic in the emission time has no real root; the reception times are inconsistent")]
    NoRealSolution,

    #[error("source and mirror point coincide")]
    DegenerateMirror,

    #[error("tuple product {product} exceeds budget {budget}")]
    BudgetExceeded { product: u128, budget: u128 },

    #[error("invalid input: {0}")]
    Invalid(String),
}

impl Error {
    /// Numeric failures as opposed to malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NotSpanning { .. }
                | Error::TheoremViolation
                | Error::NoRealSolution
                | Error::DegenerateMirror
        )
    }
}
