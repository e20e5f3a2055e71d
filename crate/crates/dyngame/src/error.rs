use thiserror::Error;

/// Errors produced by problem evaluation, derivative assembly and the
/// backward/forward passes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite state produced by dynamics at stage {stage}")]
    NonFiniteState { stage: usize },

    #[error("non-finite entries in derivative block {block} at stage {stage}")]
    NonFiniteDerivative { stage: usize, block: String },

    #[error("stage game unsolvable at k={stage} (rcond {rcond:.3e})")]
    StageSingular { stage: usize, rcond: f64 },

    #[error("eigenvalue computation failed for a {dim}x{dim} matrix")]
    EigenvalueFailure { dim: usize },

    #[error("dense Jacobian is singular (rcond {rcond:.3e})")]
    SingularJacobian { rcond: f64 },

    #[error("oracle refused: total control dimension {dim} exceeds guard {guard}")]
    OracleDimensionGuard { dim: usize, guard: usize },

    #[error("invalid solve options: {0}")]
    InvalidOptions(String),

    #[error("unknown problem {name:?}; available: {available}")]
    UnknownProblem { name: String, available: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown parameter override {key:?} for problem {problem:?}; accepted: {accepted}")]
    UnknownOverride {
        problem: String,
        key: String,
        accepted: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dimension(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }
}
