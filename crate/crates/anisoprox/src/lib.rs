//! Anisotropic (dual-space preconditioned) proximal gradient methods for
//! nonconvex composite minimization.
//!
//! The crate minimizes `F = f + g` where `f` is smooth relative to a
//! Legendre reference function `φ` in the anisotropic sense and `g` admits
//! an anisotropic proximal operator. Iterations take a forward step through
//! the conjugate gradient map `∇φ*` and a backward step through an
//! epi-scaled proximal subproblem:
//!
//! ```text
//! yᵏ    = xᵏ − λ·∇φ*(∇f(xᵏ))
//! xᵏ⁺¹ ∈ argminₓ g(x) + (λ ⋆ φ)(x − yᵏ),      (λ ⋆ φ)(u) = λ·φ(u/λ)
//! ```
//!
//! With `φ = ½‖·‖²` this is the classical proximal gradient method; the
//! `exp` and symmetrized-logistic references yield multiplicative and
//! soft-threshold-like updates that track exponential and logistic
//! objectives far better than a global Lipschitz model.
//!
//! Module map:
//!
//! * [`reference`] — Legendre reference functions and conjugates.
//! * [`divergence`] — primal/dual Bregman distances.
//! * [`prox`] — closed-form and generic anisotropic proximal operators.
//! * [`solver`] — fixed-step and linesearch drivers, gap/envelope
//!   monitoring, convergence-rate estimation, Euclidean baselines.
//! * [`models`] — logistic regression, exponentially regularized linear
//!   programs (with two-sided lifting), entropic optimal-transport duals,
//!   and the smoothness-constant calculus that wires them to references.

pub mod divergence;
pub mod error;
pub mod models;
pub mod prox;
pub mod reference;
pub mod solver;

pub use divergence::{bregman_dual, bregman_primal, dual_identity_residual, BregmanValue};
pub use error::{Error, Result};
pub use prox::{backward_step, ProxResult, Regularizer};
pub use reference::{legendre_roundtrip_check, EpiScaled, ReferenceFunction};
pub use models::{
    build_exp_lp, build_lifted_exp_lp, build_logistic, build_ot_dual, combine_constants,
    descent_inequality_sampler, descent_violation, separable_product_reference,
    strong_convexity_dual_check, ConstantRule, LiftedExpLp, OtDual, ParallelUpdate, Penalty,
    ReferenceFamily, SamplerReport,
};
pub use solver::{
    fbe, forward_step, gap, rate_monitor, run_armijo_gd, run_euclidean_baseline, run_fixed,
    run_linesearch, DomainPolicy, IterateTrace, RateEstimate, SmoothObjective, SolveStatus,
    SolverConfig, StepMode, TraceRecord,
};
