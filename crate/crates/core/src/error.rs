use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("bond index {bond} out of range for {bonds} bonds")]
    InvalidBond { bond: usize, bonds: usize },

    #[error("mixing angle undefined: both couplings vanish at t = {t}")]
    MixingAngleUndefined { t: f64 },

    #[error("mixing angle is only defined for a three-cavity protocol (got {bonds} bonds)")]
    NotThreeCavity { bonds: usize },

    #[error("invalid configuration: {0}")]
    Invalid(String),

    #[error("non-finite state component at t = {t}")]
    NonFinite { t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("integration exceeded {steps} steps at t = {t}")]
    TooManySteps { t: f64, steps: usize },

    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("stationary branch lost near ttilde = {last_good}")]
    BranchLost { last_good: f64 },

    #[error("phase-space separation collapsed to zero at interval {interval}")]
    DegenerateSeparation { interval: usize },

    #[error("basis dimension {dim} exceeds cap {cap}")]
    BasisTooLarge { dim: usize, cap: usize },

    #[error("state length {got} does not match basis dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("norm drifted by {drift:e} at t = {t}")]
    NormDrift { t: f64, drift: f64 },

    #[error("coherent-state cutoff {cutoff} too small: truncation error {error:e}")]
    CutoffTooSmall { cutoff: usize, error: f64 },

    #[error("time ranges do not overlap")]
    NoOverlap,
}
