//! Composite-minimization drivers built on forward steps through `∇φ*` and
//! anisotropic backward steps.
//!
//! The fixed-step driver iterates
//!
//! ```text
//! yᵏ    = xᵏ − λ·∇φ*(∇f(xᵏ))
//! xᵏ⁺¹ = argminₓ g(x) + (λ ⋆ φ)(x − yᵏ)
//! ```
//!
//! and monitors progress through the forward-backward envelope
//!
//! ```text
//! F_λ(x̄) = f(x̄) + inf_x { g(x) + (λ⋆φ)(x − ȳ) } − λ·φ(∇φ*(∇f(x̄)))
//! gap(x̄, λ) = (F(x̄) − F_λ(x̄)) / λ
//! ```
//!
//! which is nonnegative, vanishes exactly at first-order stationary points,
//! and certifies the per-step sufficient decrease
//! `F(xᵏ⁺¹) ≤ F(xᵏ) − λ·gap(xᵏ, λ)`.
//!
//! The backtracking driver tests the anisotropic descent inequality
//! directly at each trial step size, optionally warm-starting each search
//! at the previous accepted step divided by the backtracking factor.

use std::sync::Arc;
use std::time::Instant;

use ndarray::Array1;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::prox::{backward_step, Regularizer};
use crate::reference::ReferenceFunction;

/// Armijo sufficient-decrease slope for the Euclidean gradient-descent
/// baseline.
const ARMIJO_SLOPE: f64 = 1e-4;

/// Relative slack used when floating-point noise sits on top of an exact
/// mathematical inequality (descent tests, step-size validation).
const FP_SLACK: f64 = 1e-12;

/// A smooth objective term with value and gradient oracles, declared
/// relative to a reference function.
#[derive(Clone)]
pub struct SmoothObjective {
    value: Arc<dyn Fn(&Array1<f64>) -> f64 + Send + Sync>,
    gradient: Arc<dyn Fn(&Array1<f64>) -> Array1<f64> + Send + Sync>,
    reference: ReferenceFunction,
    /// Anisotropic smoothness constant relative to `reference`, when known.
    smoothness: Option<f64>,
    convex: bool,
}

impl std::fmt::Debug for SmoothObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothObjective")
            .field("dim", &self.reference.dim())
            .field("smoothness", &self.smoothness)
            .field("convex", &self.convex)
            .finish()
    }
}

impl SmoothObjective {
    pub fn new(
        reference: ReferenceFunction,
        smoothness: Option<f64>,
        convex: bool,
        value: impl Fn(&Array1<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&Array1<f64>) -> Array1<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if let Some(l) = smoothness {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "smoothness constant must be positive and finite, got {l}"
                )));
            }
        }
        Ok(SmoothObjective {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            reference,
            smoothness,
            convex,
        })
    }

    pub fn value(&self, x: &Array1<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn grad(&self, x: &Array1<f64>) -> Array1<f64> {
        (self.gradient)(x)
    }

    pub fn reference(&self) -> &ReferenceFunction {
        &self.reference
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn dim(&self) -> usize {
        self.reference.dim()
    }

    /// Rebind the same oracles to a different reference function and
    /// smoothness constant (e.g. to run a Euclidean baseline on an
    /// objective declared smooth relative to another geometry).
    pub fn with_reference(
        &self,
        reference: ReferenceFunction,
        smoothness: Option<f64>,
    ) -> Result<Self> {
        if reference.dim() != self.reference.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.reference.dim(),
                got: reference.dim(),
            });
        }
        if let Some(l) = smoothness {
            if !l.is_finite() || l <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "smoothness constant must be positive and finite, got {l}"
                )));
            }
        }
        Ok(SmoothObjective {
            value: Arc::clone(&self.value),
            gradient: Arc::clone(&self.gradient),
            reference,
            smoothness,
            convex: self.convex,
        })
    }

    /// Max-norm error of the gradient oracle against central finite
    /// differences at `x`, relative to `1 + ‖∇f(x)‖_∞`.
    pub fn gradient_fd_error(&self, x: &Array1<f64>) -> f64 {
        let g = self.grad(x);
        let fd = finite_difference_gradient(|p| self.value(p), x);
        let scale = 1.0 + g.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let worst = g
            .iter()
            .zip(fd.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst / scale
    }
}

/// Central finite differences with per-coordinate step `1e-6·(1 + |xⱼ|)`.
pub fn finite_difference_gradient(
    fun: impl Fn(&Array1<f64>) -> f64,
    x: &Array1<f64>,
) -> Array1<f64> {
    let mut out = Array1::zeros(x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        let h = 1e-6 * (1.0 + x[j].abs());
        probe[j] = x[j] + h;
        let up = fun(&probe);
        probe[j] = x[j] - h;
        let down = fun(&probe);
        probe[j] = x[j];
        out[j] = (up - down) / (2.0 * h);
    }
    out
}

/// What to do when a gradient lands on or outside the boundary of
/// `int dom φ*`.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum DomainPolicy {
    /// Clamp toward the interior with margin `eta`, recording the event.
    Clamp { eta: f64 },
    /// Abort the run with a constraint-qualification error.
    HardError,
}

impl Default for DomainPolicy {
    fn default() -> Self {
        DomainPolicy::Clamp { eta: 1e-12 }
    }
}

/// Step-size selection for the iteration drivers.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum StepMode {
    /// Constant step `λ`; requires `λ ≤ 1/L` when `L` is declared.
    Fixed { lambda: f64 },
    /// Backtracking from `lambda_max` by factor `alpha` each trial until
    /// the anisotropic descent inequality accepts; aborts below
    /// `lambda_min`.
    Linesearch {
        lambda_max: f64,
        alpha: f64,
        lambda_min: f64,
    },
    /// Backtracking that starts each search at the previously accepted
    /// step divided by `alpha` (first search starts at `lambda_init`).
    LinesearchWarmStart {
        lambda_init: f64,
        alpha: f64,
        lambda_min: f64,
    },
}

/// Driver configuration shared by all run functions.
#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub mode: StepMode,
    /// Iteration budget (number of update steps).
    pub max_iter: usize,
    /// Stop once `gap(xᵏ, λ) ≤ gap_tol·(1 + |F(xᵏ)|)`. A negative value
    /// disables the gap stop so the run always exhausts `max_iter`; note a
    /// zero tolerance still stops at points whose gap vanishes exactly.
    pub gap_tol: f64,
    pub domain_policy: DomainPolicy,
}

impl SolverConfig {
    pub fn fixed(lambda: f64) -> Self {
        SolverConfig {
            mode: StepMode::Fixed { lambda },
            max_iter: 10_000,
            gap_tol: 1e-9,
            domain_policy: DomainPolicy::default(),
        }
    }

    pub fn linesearch(lambda_max: f64, alpha: f64, lambda_min: f64) -> Self {
        SolverConfig {
            mode: StepMode::Linesearch {
                lambda_max,
                alpha,
                lambda_min,
            },
            max_iter: 10_000,
            gap_tol: 1e-9,
            domain_policy: DomainPolicy::default(),
        }
    }

    pub fn warm_start(lambda_init: f64, alpha: f64, lambda_min: f64) -> Self {
        SolverConfig {
            mode: StepMode::LinesearchWarmStart {
                lambda_init,
                alpha,
                lambda_min,
            },
            max_iter: 10_000,
            gap_tol: 1e-9,
            domain_policy: DomainPolicy::default(),
        }
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_gap_tol(mut self, gap_tol: f64) -> Self {
        self.gap_tol = gap_tol;
        self
    }

    pub fn with_domain_policy(mut self, policy: DomainPolicy) -> Self {
        self.domain_policy = policy;
        self
    }

    /// Validate the configuration against a declared smoothness constant.
    fn validate(&self, smoothness: Option<f64>) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be >= 1".into()));
        }
        if !self.gap_tol.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gap_tol must be finite, got {}",
                self.gap_tol
            )));
        }
        match self.mode {
            StepMode::Fixed { lambda } => {
                if !lambda.is_finite() || lambda <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "fixed step size must be positive, got {lambda}"
                    )));
                }
                if let Some(l) = smoothness {
                    // Allow a relative slack so that constants computed as
                    // 1/L in different orders of operations still validate.
                    if lambda * l > 1.0 + 1e-9 {
                        return Err(Error::InvalidParameter(format!(
                            "fixed step size {lambda} exceeds 1/L = {}",
                            1.0 / l
                        )));
                    }
                }
                Ok(())
            }
            StepMode::Linesearch {
                lambda_max,
                alpha,
                lambda_min,
            }
            | StepMode::LinesearchWarmStart {
                lambda_init: lambda_max,
                alpha,
                lambda_min,
            } => {
                if !(alpha > 0.0 && alpha < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "backtracking factor must lie in (0,1), got {alpha}"
                    )));
                }
                if !lambda_max.is_finite() || lambda_max <= 0.0 {
                    return Err(Error::InvalidParameter(format!(
                        "initial step size must be positive, got {lambda_max}"
                    )));
                }
                if !(lambda_min > 0.0) || lambda_min > lambda_max {
                    return Err(Error::InvalidParameter(format!(
                        "step floor must satisfy 0 < lambda_min <= {lambda_max}, got {lambda_min}"
                    )));
                }
                Ok(())
            }
        }
    }
}

/// One row of an iterate trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub k: usize,
    /// Composite objective `F(xᵏ) = f(xᵏ) + g(xᵏ)`.
    pub objective: f64,
    /// `gap(xᵏ, λₖ)` at the step size used for the update from `xᵏ`.
    pub gap: f64,
    /// Step size used for the update from `xᵏ`.
    pub lambda: f64,
    /// Cumulative gradient evaluations including this iterate's.
    pub grad_evals: usize,
    /// Wall-clock seconds since the run started.
    pub time_s: f64,
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SolveStatus {
    /// The scaled gap tolerance was met.
    GapConverged,
    /// The iteration budget ran out.
    MaxIterations,
    /// A runtime error aborted the run; the trace holds the iterates
    /// visited before the failure.
    Failed(String),
}

/// Full record of a run: per-iterate monitoring rows, the final point, and
/// operation counts.
#[derive(Debug, Clone)]
pub struct IterateTrace {
    pub records: Vec<TraceRecord>,
    pub status: SolveStatus,
    pub final_point: Array1<f64>,
    /// Gradient coordinates clamped back into the conjugate domain.
    pub clamp_events: usize,
    /// Total backward steps (one per linesearch trial).
    pub backward_steps: usize,
    /// Total smooth-value evaluations (one per linesearch trial plus one
    /// per iterate for monitoring).
    pub f_evals: usize,
}

impl IterateTrace {
    /// Update steps actually taken.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }

    pub fn final_gap(&self) -> f64 {
        self.records.last().map(|r| r.gap).unwrap_or(f64::NAN)
    }

    pub fn grad_evals(&self) -> usize {
        self.records.last().map(|r| r.grad_evals).unwrap_or(0)
    }

    /// Serialize as CSV with header `k,F,gap,lambda,grad_evals,time_s`.
    /// With `include_timings = false` (the default for reproducible
    /// artifacts) the time column is written as zeros so that repeated runs
    /// emit identical bytes.
    pub fn to_csv(&self, include_timings: bool) -> String {
        let mut out = String::from("k,F,gap,lambda,grad_evals,time_s\n");
        for r in &self.records {
            let time = if include_timings { r.time_s } else { 0.0 };
            out.push_str(&format!(
                "{},{:e},{:e},{:e},{},{:.6}\n",
                r.k, r.objective, r.gap, r.lambda, r.grad_evals, time
            ));
        }
        out
    }

    /// Run summary as a JSON object (status, iterations, final objective
    /// and gap, operation counts, clamp events, and the configuration).
    pub fn summary_json(&self, config: &SolverConfig) -> serde_json::Value {
        let status = match &self.status {
            SolveStatus::GapConverged => "gap_converged".to_string(),
            SolveStatus::MaxIterations => "max_iterations".to_string(),
            SolveStatus::Failed(msg) => format!("failed: {msg}"),
        };
        serde_json::json!({
            "status": status,
            "iterations": self.iterations(),
            "final_objective": self.final_objective(),
            "final_gap": self.final_gap(),
            "grad_evals": self.grad_evals(),
            "f_evals": self.f_evals,
            "backward_steps": self.backward_steps,
            "clamp_events": self.clamp_events,
            "config": serde_json::to_value(config).expect("config serializes"),
        })
    }
}

/// Gradient evaluation honoring the domain policy. Returns the (possibly
/// clamped) gradient and the number of clamped coordinates.
fn graded(
    f: &SmoothObjective,
    x: &Array1<f64>,
    policy: DomainPolicy,
) -> Result<(Array1<f64>, usize)> {
    let mut grad = f.grad(x);
    if grad.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric(
            "gradient evaluation produced a non-finite value".into(),
        ));
    }
    let phi = f.reference();
    match policy {
        DomainPolicy::Clamp { eta } => {
            let moved = phi.clamp_to_conj_interior(&mut grad, eta);
            if !phi.in_conj_interior(&grad, 0.0) {
                return Err(Error::ConstraintQualification {
                    reason: "gradient left the conjugate domain beyond repair".into(),
                    boundary_distance: phi.conj_boundary_distance(&grad),
                });
            }
            Ok((grad, moved))
        }
        DomainPolicy::HardError => {
            if !phi.in_conj_interior(&grad, 0.0) {
                return Err(Error::ConstraintQualification {
                    reason: "gradient left the interior of the conjugate domain".into(),
                    boundary_distance: phi.conj_boundary_distance(&grad),
                });
            }
            Ok((grad, 0))
        }
    }
}

/// Forward step `y = x − λ·∇φ*(∇f(x))`.
///
/// Errors with a constraint-qualification diagnostic (signed boundary
/// distance) when the gradient leaves the interior of `dom φ*`.
pub fn forward_step(f: &SmoothObjective, lambda: f64, x: &Array1<f64>) -> Result<Array1<f64>> {
    let (grad, _) = graded(f, x, DomainPolicy::HardError)?;
    let step = f.reference().conj_grad(&grad)?;
    let mut y = x.clone();
    for (yj, sj) in y.iter_mut().zip(step.iter()) {
        *yj -= lambda * sj;
    }
    Ok(y)
}

/// One forward-backward pass from `x`, sharing everything the drivers and
/// the envelope need.
struct ForwardBackward {
    f_x: f64,
    objective: f64,
    /// `λ·φ(∇φ*(∇f(x)))`, the epi-scaled value of the forward displacement.
    phi_term: f64,
    /// Envelope `inf g + (λ⋆φ)(· − y)` attained by `next`.
    envelope: f64,
    next: Array1<f64>,
    clamped: usize,
}

fn forward_backward(
    f: &SmoothObjective,
    g: &Regularizer,
    lambda: f64,
    x: &Array1<f64>,
    policy: DomainPolicy,
) -> Result<ForwardBackward> {
    let (grad, clamped) = graded(f, x, policy)?;
    let phi = f.reference();
    let step = phi.conj_grad(&grad)?;
    let mut y = x.clone();
    for (yj, sj) in y.iter_mut().zip(step.iter()) {
        *yj -= lambda * sj;
    }
    let prox = backward_step(g, phi, lambda, &y)?;
    let f_x = f.value(x);
    let objective = f_x + g.value(x);
    let phi_term = lambda * phi.value(&step);
    Ok(ForwardBackward {
        f_x,
        objective,
        phi_term,
        envelope: prox.envelope,
        next: prox.point,
        clamped,
    })
}

/// Forward-backward envelope `F_λ(x̄)`.
pub fn fbe(f: &SmoothObjective, g: &Regularizer, lambda: f64, x: &Array1<f64>) -> Result<f64> {
    let fb = forward_backward(f, g, lambda, x, DomainPolicy::HardError)?;
    Ok(fb.f_x + fb.envelope - fb.phi_term)
}

/// Stationarity gap `gap(x̄, λ) = (F(x̄) − F_λ(x̄)) / λ`: nonnegative up to
/// floating-point slack, zero exactly at first-order stationary points, and
/// for `g ≡ 0` equal to the dual Bregman distance `D_{φ*}(0, ∇f(x̄))`.
pub fn gap(f: &SmoothObjective, g: &Regularizer, lambda: f64, x: &Array1<f64>) -> Result<f64> {
    let fb = forward_backward(f, g, lambda, x, DomainPolicy::HardError)?;
    let envelope_total = fb.f_x + fb.envelope - fb.phi_term;
    Ok((fb.objective - envelope_total) / lambda)
}

struct RunState {
    records: Vec<TraceRecord>,
    clamp_events: usize,
    backward_steps: usize,
    f_evals: usize,
    grad_evals: usize,
    started: Instant,
}

impl RunState {
    fn new() -> Self {
        RunState {
            records: Vec::new(),
            clamp_events: 0,
            backward_steps: 0,
            f_evals: 0,
            grad_evals: 0,
            started: Instant::now(),
        }
    }

    fn push(&mut self, k: usize, objective: f64, gap: f64, lambda: f64) {
        self.records.push(TraceRecord {
            k,
            objective,
            gap,
            lambda,
            grad_evals: self.grad_evals,
            time_s: self.started.elapsed().as_secs_f64(),
        });
    }

    fn finish(self, status: SolveStatus, final_point: Array1<f64>) -> IterateTrace {
        IterateTrace {
            records: self.records,
            status,
            final_point,
            clamp_events: self.clamp_events,
            backward_steps: self.backward_steps,
            f_evals: self.f_evals,
        }
    }
}

fn check_problem(f: &SmoothObjective, g: &Regularizer, x0: &Array1<f64>) -> Result<()> {
    if g.dim() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: g.dim(),
        });
    }
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    Ok(())
}

/// Record a gap value, flushing floating-point dust at stationarity to
/// zero; genuinely negative gaps (beyond the slack) are kept so that
/// downstream invariant checks can see them.
fn recorded_gap(raw: f64, objective: f64) -> f64 {
    if raw < 0.0 && raw >= -FP_SLACK * (1.0 + objective.abs()) {
        0.0
    } else {
        raw
    }
}

/// Fixed-step anisotropic proximal gradient descent.
///
/// Requires `λ ≤ 1/L` when the objective declares its smoothness constant.
/// Every iterate satisfies the sufficient decrease
/// `F(xᵏ⁺¹) ≤ F(xᵏ) − λ·gap(xᵏ, λ)` up to floating-point slack, and the
/// smallest gap after `K` steps is at most `(F(x⁰) − inf F)/(λK)`.
pub fn run_fixed(
    f: &SmoothObjective,
    g: &Regularizer,
    config: &SolverConfig,
    x0: &Array1<f64>,
) -> Result<IterateTrace> {
    check_problem(f, g, x0)?;
    config.validate(f.smoothness())?;
    let lambda = match config.mode {
        StepMode::Fixed { lambda } => lambda,
        _ => {
            return Err(Error::InvalidParameter(
                "run_fixed needs StepMode::Fixed".into(),
            ))
        }
    };

    let mut state = RunState::new();
    let mut x = x0.clone();
    loop {
        let k = state.records.len();
        let fb = match forward_backward(f, g, lambda, &x, config.domain_policy) {
            Ok(fb) => fb,
            Err(e) => return Ok(state.finish(SolveStatus::Failed(e.to_string()), x)),
        };
        state.grad_evals += 1;
        state.f_evals += 1;
        state.backward_steps += 1;
        state.clamp_events += fb.clamped;
        let envelope_total = fb.f_x + fb.envelope - fb.phi_term;
        let gap_k = (fb.objective - envelope_total) / lambda;
        state.push(k, fb.objective, recorded_gap(gap_k, fb.objective), lambda);

        if gap_k <= config.gap_tol * (1.0 + fb.objective.abs()) {
            return Ok(state.finish(SolveStatus::GapConverged, x));
        }
        if k == config.max_iter {
            return Ok(state.finish(SolveStatus::MaxIterations, x));
        }
        x = fb.next;
    }
}

/// Backtracking anisotropic proximal gradient descent.
///
/// Each outer iteration evaluates the gradient once, then shrinks the trial
/// step by the backtracking factor until the anisotropic descent inequality
///
/// ```text
/// f(x⁺) ≤ f(xᵏ) + (λ⋆φ)(x⁺ − yᵏ) − λ·φ(∇φ*(∇f(xᵏ)))
/// ```
///
/// accepts (each trial costs one backward step and one `f` evaluation).
/// When the objective is smooth with constant `L`, every trial at
/// `λ ≤ 1/L` passes, so accepted steps never fall below
/// `min{λ_start, α/L}`. The warm-start mode begins each search at the
/// previously accepted step divided by `α`.
pub fn run_linesearch(
    f: &SmoothObjective,
    g: &Regularizer,
    config: &SolverConfig,
    x0: &Array1<f64>,
) -> Result<IterateTrace> {
    check_problem(f, g, x0)?;
    config.validate(f.smoothness())?;
    let (start0, alpha, floor, warm) = match config.mode {
        StepMode::Linesearch {
            lambda_max,
            alpha,
            lambda_min,
        } => (lambda_max, alpha, lambda_min, false),
        StepMode::LinesearchWarmStart {
            lambda_init,
            alpha,
            lambda_min,
        } => (lambda_init, alpha, lambda_min, true),
        StepMode::Fixed { .. } => {
            return Err(Error::InvalidParameter(
                "run_linesearch needs a backtracking step mode".into(),
            ))
        }
    };

    let phi = f.reference();
    let mut state = RunState::new();
    let mut x = x0.clone();
    let mut next_start = start0;
    loop {
        let k = state.records.len();
        let (grad, clamped) = match graded(f, &x, config.domain_policy) {
            Ok(r) => r,
            Err(e) => return Ok(state.finish(SolveStatus::Failed(e.to_string()), x)),
        };
        state.grad_evals += 1;
        state.clamp_events += clamped;
        let step = match phi.conj_grad(&grad) {
            Ok(s) => s,
            Err(e) => return Ok(state.finish(SolveStatus::Failed(e.to_string()), x)),
        };
        let f_x = f.value(&x);
        state.f_evals += 1;
        let objective = f_x + g.value(&x);
        let accept_slack = FP_SLACK * (1.0 + f_x.abs());

        let mut lambda = next_start;
        let accepted = loop {
            if lambda < floor {
                let e = Error::LinesearchFloor {
                    floor,
                    iteration: k,
                };
                return Ok(state.finish(SolveStatus::Failed(e.to_string()), x));
            }
            let mut y = x.clone();
            for (yj, sj) in y.iter_mut().zip(step.iter()) {
                *yj -= lambda * sj;
            }
            let prox = match backward_step(g, phi, lambda, &y) {
                Ok(p) => p,
                Err(e) => return Ok(state.finish(SolveStatus::Failed(e.to_string()), x)),
            };
            state.backward_steps += 1;
            let f_next = f.value(&prox.point);
            state.f_evals += 1;
            let diff = &prox.point - &y;
            let phi_move = phi.epi_scale(lambda).value(&diff);
            let phi_term = lambda * phi.value(&step);
            if f_next <= f_x + phi_move - phi_term + accept_slack {
                break (lambda, prox, phi_term, f_next);
            }
            lambda *= alpha;
        };

        let (lambda_k, prox, phi_term, _f_next) = accepted;
        let envelope_total = f_x + prox.envelope - phi_term;
        let gap_k = (objective - envelope_total) / lambda_k;
        state.push(k, objective, recorded_gap(gap_k, objective), lambda_k);

        if gap_k <= config.gap_tol * (1.0 + objective.abs()) {
            return Ok(state.finish(SolveStatus::GapConverged, x));
        }
        if k == config.max_iter {
            return Ok(state.finish(SolveStatus::MaxIterations, x));
        }
        x = prox.point;
        next_start = if warm { lambda_k / alpha } else { start0 };
    }
}

/// Classical (Euclidean) proximal gradient descent in the diagonal metric
/// `diag(weights)`, written directly against the Euclidean closed forms.
///
/// With unit weights and the same fixed step this reproduces the
/// anisotropic driver under the Euclidean reference bit for bit, which the
/// test suite checks; it also supports backtracking on the quadratic upper
/// bound for objectives without a declared Euclidean constant.
pub fn run_euclidean_baseline(
    f: &SmoothObjective,
    g: &Regularizer,
    weights: &Array1<f64>,
    config: &SolverConfig,
    x0: &Array1<f64>,
) -> Result<IterateTrace> {
    check_problem(f, g, x0)?;
    if weights.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: weights.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::InvalidParameter(
            "baseline metric weights must be positive".into(),
        ));
    }
    // The declared smoothness of `f` refers to its own reference geometry,
    // not the Euclidean one, so fixed steps are taken at face value here.
    config.validate(None)?;

    let euclidean_prox = |lambda: f64, y: &Array1<f64>| -> Result<Array1<f64>> {
        euclidean_prox_point(g, weights, lambda, y)
    };

    let mut state = RunState::new();
    let mut x = x0.clone();
    let (start0, alpha, floor, fixed, warm) = match config.mode {
        StepMode::Fixed { lambda } => (lambda, 1.0, lambda, true, false),
        StepMode::Linesearch {
            lambda_max,
            alpha,
            lambda_min,
        } => (lambda_max, alpha, lambda_min, false, false),
        StepMode::LinesearchWarmStart {
            lambda_init,
            alpha,
            lambda_min,
        } => (lambda_init, alpha, lambda_min, false, true),
    };
    let mut next_start = start0;

    loop {
        let k = state.records.len();
        let grad = f.grad(&x);
        state.grad_evals += 1;
        if grad.iter().any(|t| !t.is_finite()) {
            let e = Error::Numeric("gradient evaluation produced a non-finite value".into());
            return Ok(state.finish(SolveStatus::Failed(e.to_string()), x));
        }
        let f_x = f.value(&x);
        state.f_evals += 1;
        let objective = f_x + g.value(&x);
        let accept_slack = FP_SLACK * (1.0 + f_x.abs());

        // Preconditioned gradient direction.
        let mut step = grad.clone();
        for (sj, wj) in step.iter_mut().zip(weights.iter()) {
            *sj /= wj;
        }
        // λ·φ(step) for φ = ½‖·‖²_w: the forward displacement term.
        let phi_of_step: f64 = step
            .iter()
            .zip(weights.iter())
            .map(|(sj, wj)| 0.5 * wj * sj * sj)
            .sum();

        let mut lambda = next_start;
        let accepted = loop {
            if lambda < floor && !fixed {
                let e = Error::LinesearchFloor {
                    floor,
                    iteration: k,
                };
                return Ok(state.finish(SolveStatus::Failed(e.to_string()), x));
            }
            let mut y = x.clone();
            for (yj, sj) in y.iter_mut().zip(step.iter()) {
                *yj -= lambda * sj;
            }
            let point = match euclidean_prox(lambda, &y) {
                Ok(p) => p,
                Err(e) => return Ok(state.finish(SolveStatus::Failed(e.to_string()), x)),
            };
            state.backward_steps += 1;
            if fixed {
                break (lambda, y, point, f_x);
            }
            let f_next = f.value(&point);
            state.f_evals += 1;
            // Quadratic upper-bound test in the weighted metric.
            let quad: f64 = point
                .iter()
                .zip(y.iter())
                .zip(weights.iter())
                .map(|((pj, yj), wj)| 0.5 * wj * (pj - yj) * (pj - yj) / lambda)
                .sum();
            if f_next <= f_x + quad - lambda * phi_of_step + accept_slack {
                break (lambda, y, point, f_next);
            }
            lambda *= alpha;
        };

        let (lambda_k, y, point, _f_next) = accepted;
        // Euclidean envelope and gap at the accepted step.
        let move_term: f64 = point
            .iter()
            .zip(y.iter())
            .zip(weights.iter())
            .map(|((pj, yj), wj)| 0.5 * wj * (pj - yj) * (pj - yj) / lambda_k)
            .sum();
        let envelope_total = f_x + g.value(&point) + move_term - lambda_k * phi_of_step;
        let gap_k = (objective - envelope_total) / lambda_k;
        state.push(k, objective, recorded_gap(gap_k, objective), lambda_k);

        if gap_k <= config.gap_tol * (1.0 + objective.abs()) {
            return Ok(state.finish(SolveStatus::GapConverged, x));
        }
        if k == config.max_iter {
            return Ok(state.finish(SolveStatus::MaxIterations, x));
        }
        x = point;
        next_start = if warm { lambda_k / alpha } else { start0 };
    }
}

/// Closed-form Euclidean proximal point in the metric `diag(weights)`.
fn euclidean_prox_point(
    g: &Regularizer,
    weights: &Array1<f64>,
    lambda: f64,
    y: &Array1<f64>,
) -> Result<Array1<f64>> {
    use crate::prox::{soft_threshold, RegKind};
    let mut x = y.clone();
    match g.kind() {
        RegKind::Zero => {
            for (xj, wj) in x.iter_mut().zip(weights.iter()) {
                *xj += (0.0 / wj) * lambda;
            }
        }
        RegKind::Linear { coeffs } => {
            for ((xj, cj), wj) in x.iter_mut().zip(coeffs.iter()).zip(weights.iter()) {
                *xj += (-cj / wj) * lambda;
            }
        }
        RegKind::L1 { nu } => {
            for (xj, wj) in x.iter_mut().zip(weights.iter()) {
                let rho = lambda * nu / wj;
                *xj = soft_threshold(*xj, rho);
            }
        }
        RegKind::SquaredL2 { nu } => {
            for (xj, wj) in x.iter_mut().zip(weights.iter()) {
                *xj = wj * *xj / (lambda * nu + wj);
            }
        }
        RegKind::Consensus { half_dim } => {
            let h = *half_dim;
            for j in 0..h {
                let v = (weights[j] * y[j] - weights[h + j] * y[h + j])
                    / (weights[j] + weights[h + j]);
                x[j] = v;
                x[h + j] = -v;
            }
        }
        RegKind::Separable { .. } => {
            return Err(Error::Unsupported(
                "the euclidean baseline supports zero, linear, l1, squared-l2, and consensus"
                    .into(),
            ))
        }
    }
    Ok(x)
}

/// Euclidean gradient descent with Armijo backtracking (sufficient-decrease
/// slope `1e-4`), for smooth objectives only. The trace gap column reports
/// `½‖∇f‖²`, the Euclidean stationarity measure.
pub fn run_armijo_gd(
    f: &SmoothObjective,
    config: &SolverConfig,
    x0: &Array1<f64>,
) -> Result<IterateTrace> {
    if x0.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x0.len(),
        });
    }
    config.validate(None)?;
    let (start0, alpha, floor, warm) = match config.mode {
        StepMode::Linesearch {
            lambda_max,
            alpha,
            lambda_min,
        } => (lambda_max, alpha, lambda_min, false),
        StepMode::LinesearchWarmStart {
            lambda_init,
            alpha,
            lambda_min,
        } => (lambda_init, alpha, lambda_min, true),
        StepMode::Fixed { .. } => {
            return Err(Error::InvalidParameter(
                "run_armijo_gd needs a backtracking step mode".into(),
            ))
        }
    };

    let mut state = RunState::new();
    let mut x = x0.clone();
    let mut next_start = start0;
    loop {
        let k = state.records.len();
        let grad = f.grad(&x);
        state.grad_evals += 1;
        if grad.iter().any(|t| !t.is_finite()) {
            let e = Error::Numeric("gradient evaluation produced a non-finite value".into());
            return Ok(state.finish(SolveStatus::Failed(e.to_string()), x));
        }
        let f_x = f.value(&x);
        state.f_evals += 1;
        let grad_sq: f64 = grad.iter().map(|t| t * t).sum();
        let gap_k = 0.5 * grad_sq;
        let accept_slack = FP_SLACK * (1.0 + f_x.abs());

        // Record before searching so aborted searches still leave a row.
        let mut lambda = next_start;
        let accepted = if grad_sq == 0.0 {
            Some((lambda, x.clone(), f_x))
        } else {
            loop {
                if lambda < floor {
                    break None;
                }
                let mut cand = x.clone();
                for (cj, gj) in cand.iter_mut().zip(grad.iter()) {
                    *cj -= lambda * gj;
                }
                let f_next = f.value(&cand);
                state.f_evals += 1;
                if f_next <= f_x - ARMIJO_SLOPE * lambda * grad_sq + accept_slack {
                    break Some((lambda, cand, f_next));
                }
                lambda *= alpha;
            }
        };

        let Some((lambda_k, point, _f_next)) = accepted else {
            state.push(k, f_x, gap_k, lambda);
            let e = Error::LinesearchFloor {
                floor,
                iteration: k,
            };
            return Ok(state.finish(SolveStatus::Failed(e.to_string()), x));
        };
        state.push(k, f_x, gap_k, lambda_k);

        if gap_k <= config.gap_tol * (1.0 + f_x.abs()) {
            return Ok(state.finish(SolveStatus::GapConverged, x));
        }
        if k == config.max_iter {
            return Ok(state.finish(SolveStatus::MaxIterations, x));
        }
        x = point;
        next_start = if warm { lambda_k / alpha } else { start0 };
    }
}

/// Estimated linear convergence rate from the tail of a trace.
#[derive(Debug, Clone, PartialEq)]
pub enum RateEstimate {
    /// Least-squares slope of `ln(F(xᵏ) − inf_F)` against `k` over the tail
    /// (second half) of the trace, with the root-mean-square fit residual.
    Linear { slope: f64, residual: f64 },
    /// No meaningful rate: flat trace or nonpositive objective gaps.
    Undefined { reason: String },
}

/// Fit a geometric decay rate to `F(xᵏ) − inf_f` over the tail of a trace.
///
/// Requires at least 10 records and an `inf_f` strictly below every
/// recorded objective value for a defined estimate; flat tails and
/// nonpositive differences yield [`RateEstimate::Undefined`].
pub fn rate_monitor(trace: &IterateTrace, inf_f: f64) -> Result<RateEstimate> {
    if trace.records.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "rate estimation needs at least 10 records, got {}",
            trace.records.len()
        )));
    }
    let start = trace.records.len() / 2;
    let tail = &trace.records[start..];
    let mut logs = Vec::with_capacity(tail.len());
    for r in tail {
        let d = r.objective - inf_f;
        if d <= 0.0 {
            return Ok(RateEstimate::Undefined {
                reason: format!("nonpositive objective gap {d} at k={}", r.k),
            });
        }
        logs.push((r.k as f64, d.ln()));
    }
    let lo = logs.iter().map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
    let hi = logs
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        return Ok(RateEstimate::Undefined {
            reason: "flat trace tail".into(),
        });
    }
    let n = logs.len() as f64;
    let mean_k = logs.iter().map(|(k, _)| k).sum::<f64>() / n;
    let mean_v = logs.iter().map(|(_, v)| v).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (k, v) in &logs {
        sxx += (k - mean_k) * (k - mean_k);
        sxy += (k - mean_k) * (v - mean_v);
    }
    let slope = sxy / sxx;
    let intercept = mean_v - slope * mean_k;
    let mut ss = 0.0;
    for (k, v) in &logs {
        let e = v - (intercept + slope * k);
        ss += e * e;
    }
    let residual = (ss / n).sqrt();
    Ok(RateEstimate::Linear { slope, residual })
}
