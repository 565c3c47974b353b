use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("matrix is not a rotation: ‖RᵀR − I‖_F = {orthogonality:.3e}, det = {det}")]
    NotRotation { orthogonality: f64, det: f64 },

    #[error("matrix is not skew-symmetric: ‖S + Sᵀ‖_F = {0:.3e}")]
    NotSkew(f64),

    #[error(
        "rotation angle {angle} is within the antipodal margin of π; principal log is not unique"
    )]
    Antipodal { angle: f64 },

    #[error("score is not tangent: ‖sym(Xᵀ·g)‖_F = {0:.3e}")]
    Tangency(f64),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("linear system is numerically singular: {0}")]
    SingularSystem(String),

    #[error("at least 100 null draws are required, got {0}")]
    InsufficientDraws(usize),

    #[error("rejection envelope too loose: estimated acceptance rate {rate:.3e}; {hint}")]
    EnvelopeTooLoose { rate: f64, hint: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
