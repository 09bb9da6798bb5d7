use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: max asymmetry {asymmetry:e} exceeds {tolerance:e}")]
    NotSymmetric { asymmetry: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value while evaluating {0}")]
    NonFinite(String),

    #[error("degenerate marginal: every integrand evaluation underflowed to zero")]
    DegenerateMarginal,

    #[error("Fisher matrix is singular or ill-conditioned (condition number {condition:e})")]
    SingularFim { condition: f64 },

    #[error("expansion undefined: data density {density:e} at the nominal nuisance value is zero")]
    ExpansionUndefined { density: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),
}
