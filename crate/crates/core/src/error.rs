use thiserror::Error;

#[derive(Debug, Error)]
pub enum VrgError {
    #[error("not a valid trajectory: {0}")]
    InvalidTrajectory(String),

    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("sampling step {step}: {source}")]
    SamplerStep {
        step: usize,
        #[source]
        source: Box<VrgError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl VrgError {
    /// Errors caused by the content of an input rather than by the environment
    /// or by the numerics.
    pub fn is_validation(&self) -> bool {
        if let VrgError::SamplerStep { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            VrgError::InvalidTrajectory(_)
                | VrgError::InvalidSchedule(_)
                | VrgError::Domain(_)
                | VrgError::DimensionMismatch { .. }
                | VrgError::Precondition(_)
                | VrgError::Format(_)
                | VrgError::Json(_)
                | VrgError::Csv(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        if let VrgError::SamplerStep { source, .. } = self {
            return source.is_numerical();
        }
        matches!(self, VrgError::NonFinite(_) | VrgError::Divergence(_))
    }
}

pub type Result<T> = std::result::Result<T, VrgError>;
