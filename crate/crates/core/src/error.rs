//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by problem validation and the solver pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum HopfError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("control scaling Q is singular or numerically rank-deficient")]
    SingularScaling,

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("horizon must be positive, got {0}")]
    HorizonNonPositive(f64),

    #[error("SPD factorization failed while building the quadratic prox")]
    FactorizationFailed,

    #[error("step sizes violate tau*sigma*||K||^2 < 1 (got {0})")]
    StepSizeViolation(f64),

    #[error("value function has the same sign at both bracket ends (phi_lo={phi_lo}, phi_hi={phi_hi})")]
    NoSignChange { phi_lo: f64, phi_hi: f64 },

    #[error("outer minimum-time iteration exceeded {0} steps")]
    MaxOuterIter(usize),

    #[error("control extraction is inconsistent: least-squares residual {residual} exceeds tolerance {tolerance}")]
    ControlInconsistent { residual: f64, tolerance: f64 },

    #[error("sigma-point weight {index} is not strictly positive ({weight})")]
    NonPositiveWeight { index: usize, weight: f64 },

    #[error("mean-square-error targets support only the origin as goal state")]
    NonOriginGoal,

    #[error("operation requires a two-dimensional field, got {0} axes")]
    NotTwoDimensional(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Collected validation failures for one problem definition.
///
/// Validation does not stop at the first violation; callers get the full
/// list so a config file can be fixed in one pass.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("problem validation failed: {}", self.describe())]
pub struct ValidationReport {
    pub violations: Vec<HopfError>,
}

impl ValidationReport {
    fn describe(&self) -> String {
        self.violations
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub type Result<T> = std::result::Result<T, HopfError>;
