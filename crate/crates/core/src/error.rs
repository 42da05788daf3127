use thiserror::Error;

use crate::groups::GroupKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is singular or too ill-conditioned: {0}")]
    Singular(String),

    #[error("matrix logarithm did not converge ({0}); use a smaller time step")]
    Range(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("group mismatch: expected {expected}, found {found}")]
    GroupMismatch {
        expected: GroupKind,
        found: GroupKind,
    },

    #[error("bracket does not close on the basis of {group} (residual {residual:e})")]
    Closure { group: GroupKind, residual: f64 },

    #[error("matrix is not in the algebra of {group} (residual {residual:e})")]
    NotInAlgebra { group: GroupKind, residual: f64 },

    #[error("matrix is not a member of {group} (defect {defect:e})")]
    Membership { group: GroupKind, defect: f64 },

    #[error("integrator drifted off {group} at step {step} (defect {defect:e})")]
    IntegratorDrift {
        group: GroupKind,
        step: usize,
        defect: f64,
    },

    #[error("invalid metric: {0}")]
    Metric(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("hypothesis violated: {0}")]
    Precondition(String),

    #[error("not enough replicas for a drift test: {found} < {required}")]
    Power { found: usize, required: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Failures caused by floating-point breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_)
                | Error::Range(_)
                | Error::NonFinite(_)
                | Error::Closure { .. }
                | Error::NotInAlgebra { .. }
                | Error::IntegratorDrift { .. }
        )
    }
}
