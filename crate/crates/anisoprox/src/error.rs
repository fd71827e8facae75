use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes surfaced by reference functions, proximal operators,
/// model builders, and solver drivers.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A constructor argument violates its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two vectors that must share a length do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A dual-space point left the open domain of the conjugate gradient.
    #[error("conjugate-domain violation at coordinate {index}: value {value} is outside the open domain")]
    ConjugateDomain { index: usize, value: f64 },

    /// A constraint qualification needed by a forward or backward step fails.
    /// `boundary_distance` is the signed distance of the offending point to
    /// the conjugate-domain boundary (negative means outside).
    #[error("constraint qualification failed: {reason} (boundary distance {boundary_distance:e})")]
    ConstraintQualification {
        reason: String,
        boundary_distance: f64,
    },

    /// A separable proximal subproblem is unbounded below, which signals a
    /// step size at or above the prox-boundedness threshold of the
    /// regularizer.
    #[error("proximal subproblem unbounded below at coordinate {coordinate}: step size reaches the prox-boundedness threshold")]
    ProxUnbounded { coordinate: usize },

    /// An inner scalar root solve stalled above its residual target.
    #[error("scalar solve did not converge at coordinate {coordinate}: residual {residual:e}")]
    ScalarSolve { coordinate: usize, residual: f64 },

    /// The backtracking loop stepped below its configured floor.
    #[error("linesearch step fell below the floor {floor:e} at iteration {iteration}")]
    LinesearchFloor { floor: f64, iteration: usize },

    /// The requested combination of regularizer and reference function has
    /// no implemented backward step.
    #[error("unsupported combination: {0}")]
    Unsupported(String),

    /// A smoothness-calculus rule was applied outside its hypotheses.
    #[error("smoothness-calculus rule violated: {0}")]
    Calculus(String),

    /// A numeric invariant broke at run time (non-finite value, overflow).
    #[error("numeric failure: {0}")]
    Numeric(String),
}
