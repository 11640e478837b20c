use thiserror::Error;

#[derive(Debug, Error)]
pub enum NcError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("operator is not self-adjoint (defect {0:.3e})")]
    NotSelfAdjoint(f64),
    #[error("operator is not positive (lambda_min = {0:.3e})")]
    NotPositive(f64),
    #[error("operator is not a projection (defect {0:.3e})")]
    NotProjection(f64),
    #[error("projections {0} and {1} overlap (|q_i q_j| = {2:.3e})")]
    OverlappingProjections(usize, usize, f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("oracle contract violated: {0}")]
    OracleViolation(String),
    #[error("parameter region: {0}")]
    ParameterRegion(String),
    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl NcError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        NcError::Invalid { field: field.into(), reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, NcError>;
