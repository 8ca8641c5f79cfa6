use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("footstep plan rejected: {0}")]
    PlanRejected(String),

    /// The plan has no step after the current one; callers fall back to ZMP-only balance.
    #[error("no next step available after index {current}")]
    NoNextStep { current: usize },

    #[error("step QP infeasible: {0}")]
    Infeasible(String),

    #[error("QP solver did not converge within {iterations} iterations")]
    SolverDiverged { iterations: usize },

    #[error("solution rejected: {0}")]
    SolutionRejected(String),

    #[error("tactile layout mismatch: expected {expected} fingers, got {got}")]
    LayoutMismatch { expected: usize, got: usize },

    #[error("collaboration state error: {0}")]
    State(String),

    /// Loop closure of the wrist mechanism has no solution at the requested pose.
    #[error("singular wrist configuration: {0}")]
    SingularConfiguration(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("wrist search failed: {0}")]
    SearchFailed(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error("I/O error at {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
