use thiserror::Error;

/// Failures raised by the numerical kernels and constructions.
///
/// Variants fall into two families: a hypothesis of a statement was found
/// not to hold for the given input, or the computation itself could not be
/// carried out reliably. [`LabError::is_hypothesis`] tells them apart.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not Hermitian within tolerance (defect {defect:.3e} > {tol:.3e})")]
    NonHermitian { defect: f64, tol: f64 },

    #[error("grid of size {grid} cannot resolve {needed} coefficients without aliasing")]
    Aliasing { grid: usize, needed: usize },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("quadrature did not converge under refinement: {0}")]
    NonConvergence(String),

    #[error("window overflow: index {index} outside [-{window}, {window}]")]
    WindowOverflow { index: i64, window: i64 },

    #[error("search exhausted at stage {stage}: {reason}")]
    Exhausted { stage: usize, reason: String },

    #[error("floating point overflow at step {step}")]
    Overflow { step: usize },

    #[error("operator norm {norm:.6} does not exceed 1; backward terms cannot be made summable")]
    NonExpanding { norm: f64 },

    #[error("numerically singular system: {0}")]
    Singular(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("parse error at position {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("io: {0}")]
    Io(String),
}

impl LabError {
    /// True when the error reports a violated mathematical hypothesis rather
    /// than a numerical breakdown.
    pub fn is_hypothesis(&self) -> bool {
        matches!(
            self,
            LabError::Hypothesis(_) | LabError::NonExpanding { .. } | LabError::Exhausted { .. }
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LabError::InvalidInput(msg.into())
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
