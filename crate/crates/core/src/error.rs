use thiserror::Error;

/// Errors raised by constructions, certification and solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("incompatible vectors: {0}")]
    Incompatible(String),

    #[error("not hyperbolic on coordinate {0}")]
    NotHyperbolicCoordinate(usize),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("not certifiably (generalized) hyperbolic: {0}")]
    NotCertifiable(String),

    #[error("operator is not invertible")]
    NotInvertible,

    #[error("perturbed map not certifiably invertible: inv_norm * lip = {product}")]
    PerturbedNotInvertible { product: f64 },

    #[error("admissibility violated: {0}")]
    Inadmissible(String),

    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),

    #[error("operator is not hyperbolic; uniqueness of the conjugacy fails")]
    NotHyperbolic,

    #[error("vector is not in M ∩ T(N): {0}")]
    NotInStableUnstableIntersection(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
