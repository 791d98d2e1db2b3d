use thiserror::Error;

pub type Result<T, E = LqError> = std::result::Result<T, E>;

/// Failure modes of the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LqError {
    #[error("dimension mismatch at {location}.{field}: expected {expected}, found {found}")]
    DimensionMismatch {
        location: String,
        field: &'static str,
        expected: String,
        found: String,
    },
    #[error("invalid proximal parameter mu = {0} (must be finite and > 0)")]
    InvalidMu(f64),
    #[error("terminal constraints present but mu = 0")]
    MuZeroWithConstraints,
    #[error("dense KKT matrix is singular")]
    SingularKkt,
    #[error("stage KKT system is singular at stage {stage}")]
    SingularStageKkt { stage: usize },
    #[error("dynamics matrix E is singular at stage {stage}")]
    SingularE { stage: usize },
    #[error("matrix I + mu*Pcheck is singular at stage {stage}")]
    SingularUpsilon { stage: usize },
    #[error("reduced control Hessian is not positive definite at stage {stage}")]
    IndefiniteRhat { stage: usize },
    #[error("initial-condition saddle system is singular")]
    SingularInitKkt,
    #[error("cyclic saddle system is singular")]
    SingularCyclicKkt,
    #[error("block-tridiagonal diagonal block {0} is singular")]
    SingularDiagonalBlock(usize),
    #[error("invalid leg count J = {legs} for horizon N = {horizon} (need 1 <= J < N)")]
    InvalidLegCount { horizon: usize, legs: usize },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("leg {leg}: {source}")]
    Leg {
        leg: usize,
        #[source]
        source: Box<LqError>,
    },
    #[error("{0}")]
    Unsupported(String),
    #[error(
        "proximal loop did not converge in {iterations} iterations \
         (stationarity {stationarity:.3e}, feasibility {feasibility:.3e})"
    )]
    MaxItersExceeded {
        iterations: usize,
        stationarity: f64,
        feasibility: f64,
    },
}

impl LqError {
    pub(crate) fn dim(
        location: impl Into<String>,
        field: &'static str,
        expected: impl ToString,
        found: impl ToString,
    ) -> Self {
        LqError::DimensionMismatch {
            location: location.into(),
            field,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
