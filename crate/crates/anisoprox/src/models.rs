//! Application problem builders wired to the reference functions that make
//! them anisotropically smooth, plus the calculus for combining smoothness
//! constants and empirical checks of the underlying inequalities.

use std::sync::Arc;

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::prox::Regularizer;
use crate::reference::ReferenceFunction;
use crate::solver::SmoothObjective;

/// Numerically stable logistic sigmoid `1/(1+e^{−t})`.
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Penalty attached to the logistic loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    None,
    /// `ν‖x‖₁`.
    L1(f64),
    /// `ν/2·‖x‖²`.
    SquaredL2(f64),
}

/// Regularized logistic regression
///
/// ```text
/// f(x) = (1/m)·Σᵢ softplus(−bᵢ⟨aᵢ, x⟩),    g = penalty
/// ```
///
/// declared smooth relative to the symmetrized-logistic reference with
/// constant `L = maxᵢ ‖aᵢ‖²` (floored at `1e-12` for degenerate rows).
/// Feature entries must lie in `[−1, 1]` — rescale first if needed — which
/// keeps every gradient strictly inside the conjugate domain `(−1, 1)ⁿ`.
/// Labels must be exactly `±1`.
pub fn build_logistic(
    features: Array2<f64>,
    labels: Array1<f64>,
    penalty: Penalty,
) -> Result<(SmoothObjective, Regularizer)> {
    let (m, n) = features.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "logistic data must be nonempty, got {m}x{n}"
        )));
    }
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: labels.len(),
        });
    }
    for b in labels.iter() {
        if *b != 1.0 && *b != -1.0 {
            return Err(Error::InvalidParameter(format!(
                "labels must be exactly +1 or -1, got {b}"
            )));
        }
    }
    for a in features.iter() {
        if !a.is_finite() || a.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "feature entries must lie in [-1, 1], got {a}"
            )));
        }
    }
    let smoothness = features
        .outer_iter()
        .map(|row| row.iter().map(|t| t * t).sum::<f64>())
        .fold(0.0f64, f64::max)
        .max(1e-12);

    let g = match penalty {
        Penalty::None => Regularizer::zero(n),
        Penalty::L1(nu) => Regularizer::l1(nu, n)?,
        Penalty::SquaredL2(nu) => Regularizer::squared_l2(nu, n)?,
    };

    let a_val = Arc::new(features);
    let b_val = Arc::new(labels);
    let a_grad = Arc::clone(&a_val);
    let b_grad = Arc::clone(&b_val);
    let inv_m = 1.0 / m as f64;
    let f = SmoothObjective::new(
        ReferenceFunction::sym_logistic(n)?,
        Some(smoothness),
        true,
        move |x: &Array1<f64>| {
            let margins = a_val.dot(x);
            margins
                .iter()
                .zip(b_val.iter())
                .map(|(t, b)| crate::reference::softplus(-b * t))
                .sum::<f64>()
                * inv_m
        },
        move |x: &Array1<f64>| {
            let margins = a_grad.dot(x);
            let coef = Array1::from_iter(
                margins
                    .iter()
                    .zip(b_grad.iter())
                    .map(|(t, b)| -b * sigmoid(-b * t) * inv_m),
            );
            a_grad.t().dot(&coef)
        },
    )?;
    Ok((f, g))
}

/// Exponentially regularized linear program
///
/// ```text
/// min ⟨c, x⟩ + σ·Σᵢ exp((⟨aᵢ, x⟩ − bᵢ)/σ)
/// ```
///
/// with `A ≥ 0` entrywise, every column of `A` carrying at least one
/// positive entry, and `c < 0` strictly (so the linear term's backward step
/// satisfies the constraint qualification under the `exp` reference). The
/// smooth part is declared with constant `L = maxᵢ ‖aᵢ‖₁/σ`.
pub fn build_exp_lp(
    a: Array2<f64>,
    b: Array1<f64>,
    c: Array1<f64>,
    sigma: f64,
) -> Result<(SmoothObjective, Regularizer)> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "constraint data must be nonempty, got {m}x{n}"
        )));
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.len(),
        });
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "smoothing parameter must be positive, got {sigma}"
        )));
    }
    if a.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::InvalidParameter(
            "constraint matrix entries must be nonnegative and finite".into(),
        ));
    }
    if b.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "right-hand side must be finite".into(),
        ));
    }
    for j in 0..n {
        if a.column(j).sum() <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "column {j} of the constraint matrix has no positive entry; \
                 gradients would sit on the conjugate-domain boundary"
            )));
        }
    }
    if c.iter().any(|t| !t.is_finite() || *t >= 0.0) {
        return Err(Error::ConstraintQualification {
            reason: "linear costs must be strictly negative so that −c lies in int dom φ*"
                .into(),
            boundary_distance: c.iter().fold(f64::INFINITY, |acc, t| acc.min(-t)),
        });
    }

    let smoothness = a
        .outer_iter()
        .map(|row| row.sum() / sigma)
        .fold(0.0f64, f64::max);

    let g = Regularizer::linear(c);
    let a_val = Arc::new(a);
    let b_val = Arc::new(b);
    let a_grad = Arc::clone(&a_val);
    let b_grad = Arc::clone(&b_val);
    let f = SmoothObjective::new(
        ReferenceFunction::exp(n)?,
        Some(smoothness),
        true,
        move |x: &Array1<f64>| {
            let margins = a_val.dot(x);
            margins
                .iter()
                .zip(b_val.iter())
                .map(|(t, bi)| ((t - bi) / sigma).exp())
                .sum::<f64>()
                * sigma
        },
        move |x: &Array1<f64>| {
            let margins = a_grad.dot(x);
            let w = Array1::from_iter(
                margins
                    .iter()
                    .zip(b_grad.iter())
                    .map(|(t, bi)| ((t - bi) / sigma).exp()),
            );
            a_grad.t().dot(&w)
        },
    )?;
    Ok((f, g))
}

/// Two-sided lifting of an exponentially regularized LP with a
/// sign-indefinite matrix: split `A = A⁺ − A⁻` and `c = c⁺ − c⁻` into
/// nonnegative parts, shift every entry of all four by `epsilon`, and solve
///
/// ```text
/// min σ·Σᵢ exp((⟨a⁺ᵢ, x⟩ + ⟨a⁻ᵢ, x₋⟩ − bᵢ)/σ) + ⟨c⁺, x⟩ + ⟨c⁻, x₋⟩
/// s.t. x₋ = −x
/// ```
///
/// over stacked pairs `(x, x₋)` under a product of two `exp` blocks, with
/// the consensus indicator as the nonsmooth part. The shifts cancel in
/// `A⁺ − A⁻` and `c⁺ − c⁻`, so on the consensus subspace the lifted
/// objective equals the original one exactly.
#[derive(Debug, Clone)]
pub struct LiftedExpLp {
    a_plus: Array2<f64>,
    a_minus: Array2<f64>,
    c_plus: Array1<f64>,
    c_minus: Array1<f64>,
    b: Array1<f64>,
    sigma: f64,
    epsilon: f64,
    smoothness: f64,
}

/// Result of one parallel multiplicative update: the new point and how many
/// gradient components had to be floored away from zero before taking
/// logarithms.
#[derive(Debug, Clone)]
pub struct ParallelUpdate {
    pub point: Array1<f64>,
    pub floor_events: usize,
}

/// Smallest gradient component admitted into the logarithm of the parallel
/// update; anything below is floored and counted.
const DELTA_FLOOR: f64 = 1e-300;

pub fn build_lifted_exp_lp(
    a: &Array2<f64>,
    b: Array1<f64>,
    c: &Array1<f64>,
    sigma: f64,
    epsilon: f64,
) -> Result<LiftedExpLp> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "constraint data must be nonempty, got {m}x{n}"
        )));
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: b.len(),
        });
    }
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: c.len(),
        });
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "smoothing parameter must be positive, got {sigma}"
        )));
    }
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "lifting shift must be nonnegative, got {epsilon}"
        )));
    }
    if a.iter().any(|t| !t.is_finite()) || c.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "lifting needs finite matrix and cost entries".into(),
        ));
    }
    if b.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter(
            "right-hand side must be finite".into(),
        ));
    }

    let a_plus = a.mapv(|t| t.max(0.0) + epsilon);
    let a_minus = a.mapv(|t| (-t).max(0.0) + epsilon);
    let c_plus = c.mapv(|t| t.max(0.0) + epsilon);
    let c_minus = c.mapv(|t| (-t).max(0.0) + epsilon);

    for j in 0..n {
        if a_plus.column(j).sum() <= 0.0 || a_minus.column(j).sum() <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "column {j} of a split matrix has zero sum; a positive epsilon shift is \
                 required to keep gradients inside the conjugate domain"
            )));
        }
    }

    let smoothness = a_plus
        .outer_iter()
        .zip(a_minus.outer_iter())
        .map(|(rp, rm)| (rp.sum() + rm.sum()) / sigma)
        .fold(0.0f64, f64::max);

    Ok(LiftedExpLp {
        a_plus,
        a_minus,
        c_plus,
        c_minus,
        b,
        sigma,
        epsilon,
        smoothness,
    })
}

impl LiftedExpLp {
    /// Number of original variables (the pair problem has `2n`).
    pub fn dim(&self) -> usize {
        self.a_plus.ncols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Smoothness constant of the pair objective relative to
    /// [`LiftedExpLp::reference`]: `maxᵢ (‖a⁺ᵢ‖₁ + ‖a⁻ᵢ‖₁)/σ`.
    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn split_matrices(&self) -> (&Array2<f64>, &Array2<f64>) {
        (&self.a_plus, &self.a_minus)
    }

    pub fn split_costs(&self) -> (&Array1<f64>, &Array1<f64>) {
        (&self.c_plus, &self.c_minus)
    }

    /// Worst-case entry error of `(A⁺ − ε) − (A⁻ − ε) = A` and the cost
    /// analogue against the originals the split was built from.
    pub fn reconstruction_error(&self, a: &Array2<f64>, c: &Array1<f64>) -> f64 {
        let mut worst = 0.0f64;
        for ((ap, am), orig) in self
            .a_plus
            .iter()
            .zip(self.a_minus.iter())
            .zip(a.iter())
        {
            worst = worst.max(((ap - self.epsilon) - (am - self.epsilon) - orig).abs());
        }
        for ((cp, cm), orig) in self
            .c_plus
            .iter()
            .zip(self.c_minus.iter())
            .zip(c.iter())
        {
            worst = worst.max(((cp - self.epsilon) - (cm - self.epsilon) - orig).abs());
        }
        worst
    }

    /// Product of two identical `exp` blocks over the stacked pair.
    pub fn reference(&self) -> ReferenceFunction {
        let n = self.dim();
        ReferenceFunction::product(vec![
            (ReferenceFunction::exp(n).expect("n >= 1"), 1.0),
            (ReferenceFunction::exp(n).expect("n >= 1"), 1.0),
        ])
        .expect("two identical blocks")
    }

    /// The smooth pair objective over stacked `(x, x₋) ∈ ℝ²ⁿ`.
    pub fn smooth_objective(&self) -> SmoothObjective {
        let n = self.dim();
        let val = Arc::new(self.clone());
        let grd = Arc::clone(&val);
        SmoothObjective::new(
            self.reference(),
            Some(self.smoothness),
            true,
            move |z: &Array1<f64>| {
                let (x, xm) = (z.slice(s![..n]), z.slice(s![n..]));
                let mut total = val.c_plus.dot(&x) + val.c_minus.dot(&xm);
                for i in 0..val.b.len() {
                    let margin =
                        val.a_plus.row(i).dot(&x) + val.a_minus.row(i).dot(&xm) - val.b[i];
                    total += val.sigma * (margin / val.sigma).exp();
                }
                total
            },
            move |z: &Array1<f64>| {
                let (x, xm) = (z.slice(s![..n]), z.slice(s![n..]));
                let w = Array1::from_iter((0..grd.b.len()).map(|i| {
                    let margin =
                        grd.a_plus.row(i).dot(&x) + grd.a_minus.row(i).dot(&xm) - grd.b[i];
                    (margin / grd.sigma).exp()
                }));
                let gx = grd.a_plus.t().dot(&w) + &grd.c_plus;
                let gm = grd.a_minus.t().dot(&w) + &grd.c_minus;
                let mut out = Array1::zeros(2 * n);
                out.slice_mut(s![..n]).assign(&gx);
                out.slice_mut(s![n..]).assign(&gm);
                out
            },
        )
        .expect("valid pair objective")
    }

    /// Consensus indicator `δ_{{(x, x₋) : x₋ = −x}}`.
    pub fn regularizer(&self) -> Regularizer {
        Regularizer::consensus(self.dim())
    }

    /// Stack `x` into the consensus-feasible pair `(x, −x)`.
    pub fn embed(&self, x: &Array1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut z = Array1::zeros(2 * n);
        for j in 0..n {
            z[j] = x[j];
            z[n + j] = -x[j];
        }
        z
    }

    /// First half of a stacked pair.
    pub fn restrict(&self, z: &Array1<f64>) -> Array1<f64> {
        z.slice(s![..self.dim()]).to_owned()
    }

    /// The original (unlifted) smooth objective
    /// `⟨c, x⟩ + σ·Σ exp((⟨aᵢ, x⟩ − bᵢ)/σ)` over `ℝⁿ` under the unit
    /// Euclidean reference, for gradient-descent baselines. Coefficients
    /// are recovered as differences of the stored splits, so on consensus
    /// pairs this agrees with the pair objective to rounding error.
    pub fn smooth_total_objective(&self) -> SmoothObjective {
        let n = self.dim();
        let a = &self.a_plus - &self.a_minus;
        let c = &self.c_plus - &self.c_minus;
        let sigma = self.sigma;
        let b = self.b.clone();
        let a_val = Arc::new(a);
        let c_val = Arc::new(c);
        let b_val = Arc::new(b);
        let a_grad = Arc::clone(&a_val);
        let c_grad = Arc::clone(&c_val);
        let b_grad = Arc::clone(&b_val);
        SmoothObjective::new(
            ReferenceFunction::euclidean_unit(n).expect("n >= 1"),
            None,
            true,
            move |x: &Array1<f64>| {
                let margins = a_val.dot(x);
                margins
                    .iter()
                    .zip(b_val.iter())
                    .map(|(t, bi)| ((t - bi) / sigma).exp())
                    .sum::<f64>()
                    * sigma
                    + c_val.dot(x)
            },
            move |x: &Array1<f64>| {
                let margins = a_grad.dot(x);
                let w = Array1::from_iter(
                    margins
                        .iter()
                        .zip(b_grad.iter())
                        .map(|(t, bi)| ((t - bi) / sigma).exp()),
                );
                a_grad.t().dot(&w) + &*c_grad
            },
        )
        .expect("valid total objective")
    }

    /// One multiplicative update of the original variables
    ///
    /// ```text
    /// Δ⁺ = A⁺ᵀ w + c⁺,   Δ⁻ = A⁻ᵀ w + c⁻,   wᵢ = exp((⟨aᵢ, x⟩ − bᵢ)/σ)
    /// x⁺ = x − (λ/2)·(ln Δ⁺ − ln Δ⁻)
    /// ```
    ///
    /// which reproduces, on the original variables, the forward-backward
    /// step applied to the lifted pair problem from the consensus point
    /// `(x, −x)`. Gradient components below `1e-300` are floored before the
    /// logarithm and counted in the result.
    pub fn parallel_update_step(&self, lambda: f64, x: &Array1<f64>) -> Result<ParallelUpdate> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {lambda}"
            )));
        }
        let w = Array1::from_iter((0..self.b.len()).map(|i| {
            let margin = self.a_plus.row(i).dot(x) - self.a_minus.row(i).dot(x) - self.b[i];
            (margin / self.sigma).exp()
        }));
        if w.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric(
                "residual weights overflowed in the parallel update".into(),
            ));
        }
        let mut floor_events = 0usize;
        let mut floored = |t: f64| {
            if t < DELTA_FLOOR {
                floor_events += 1;
                DELTA_FLOOR
            } else {
                t
            }
        };
        let delta_plus = self.a_plus.t().dot(&w) + &self.c_plus;
        let delta_minus = self.a_minus.t().dot(&w) + &self.c_minus;
        let mut point = x.clone();
        for j in 0..n {
            let dp = floored(delta_plus[j]);
            let dm = floored(delta_minus[j]);
            point[j] -= 0.5 * lambda * (dp.ln() - dm.ln());
        }
        Ok(ParallelUpdate {
            point,
            floor_events,
        })
    }
}

/// Entropically regularized optimal-transport dual over stacked potentials
/// `(α, β) ∈ ℝⁿ⁺ᵐ`:
///
/// ```text
/// min σ·ΣᵢΣⱼ exp((αⱼ + βᵢ − Cᵢⱼ)/σ) − ⟨r, α⟩ − ⟨s, β⟩
/// ```
///
/// where `C` is the `m×n` cost, `r > 0` the marginal paired with `α`, and
/// `s > 0` the one paired with `β`.
#[derive(Debug, Clone)]
pub struct OtDual {
    cost: Array2<f64>,
    r: Array1<f64>,
    s: Array1<f64>,
    sigma: f64,
}

pub fn build_ot_dual(
    cost: Array2<f64>,
    col_marginal: Array1<f64>,
    row_marginal: Array1<f64>,
    sigma: f64,
) -> Result<OtDual> {
    let (m, n) = cost.dim();
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "cost matrix must be nonempty, got {m}x{n}"
        )));
    }
    if col_marginal.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: col_marginal.len(),
        });
    }
    if row_marginal.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: row_marginal.len(),
        });
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "entropic regularization must be positive, got {sigma}"
        )));
    }
    if cost.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("costs must be finite".into()));
    }
    if col_marginal
        .iter()
        .chain(row_marginal.iter())
        .any(|t| !t.is_finite() || *t <= 0.0)
    {
        return Err(Error::InvalidParameter(
            "marginals must be strictly positive".into(),
        ));
    }
    Ok(OtDual {
        cost,
        r: col_marginal,
        s: row_marginal,
        sigma,
    })
}

impl OtDual {
    pub fn dims(&self) -> (usize, usize) {
        self.cost.dim()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The joint problem over stacked `(α, β)` under `exp(n+m)` with
    /// smoothness constant `2/σ` (each exponential term touches exactly two
    /// coordinates), so the admissible fixed step is `σ/2`.
    pub fn joint(&self) -> (SmoothObjective, Regularizer) {
        let (m, n) = self.cost.dim();
        let sigma = self.sigma;
        let val = Arc::new(self.clone());
        let grd = Arc::clone(&val);
        let f = SmoothObjective::new(
            ReferenceFunction::exp(n + m).expect("n+m >= 1"),
            Some(2.0 / sigma),
            true,
            move |u: &Array1<f64>| {
                let (alpha, beta) = (u.slice(s![..n]), u.slice(s![n..]));
                let mut total = 0.0;
                for i in 0..m {
                    for j in 0..n {
                        total += ((alpha[j] + beta[i] - val.cost[(i, j)]) / sigma).exp();
                    }
                }
                sigma * total
            },
            move |u: &Array1<f64>| {
                let (alpha, beta) = (u.slice(s![..n]), u.slice(s![n..]));
                let mut out = Array1::zeros(n + m);
                for i in 0..m {
                    for j in 0..n {
                        let p = ((alpha[j] + beta[i] - grd.cost[(i, j)]) / sigma).exp();
                        out[j] += p;
                        out[n + i] += p;
                    }
                }
                out
            },
        )
        .expect("valid joint objective");
        let mut coeffs = Array1::zeros(n + m);
        for j in 0..n {
            coeffs[j] = -self.r[j];
        }
        for i in 0..m {
            coeffs[n + i] = -self.s[i];
        }
        // The gradient of the smooth part excludes the marginals, which
        // live in the linear nonsmooth part so that its backward step under
        // exp is the multiplicative marginal scaling.
        (f, Regularizer::linear(coeffs))
    }

    /// Transport plan `Pᵢⱼ = exp((αⱼ + βᵢ − Cᵢⱼ)/σ)` induced by a pair of
    /// potentials.
    pub fn plan(&self, alpha: &Array1<f64>, beta: &Array1<f64>) -> Array2<f64> {
        let (m, n) = self.cost.dim();
        let mut p = Array2::zeros((m, n));
        for i in 0..m {
            for j in 0..n {
                p[(i, j)] = ((alpha[j] + beta[i] - self.cost[(i, j)]) / sigma_of(self)).exp();
            }
        }
        p
    }

    /// One alternating sweep of exact block minimization: an `α` update at
    /// block step `λ = σ` (the block constant is `1/σ`), then a `β` update
    /// using the fresh `α`. Each block step lands exactly on the block
    /// minimizer, which is the classical Sinkhorn scaling written in the
    /// potentials:
    ///
    /// ```text
    /// α⁺ⱼ = αⱼ − σ·ln Σᵢ exp((αⱼ + βᵢ − Cᵢⱼ)/σ) + σ·ln rⱼ
    /// β⁺ᵢ = βᵢ − σ·ln Σⱼ exp((α⁺ⱼ + βᵢ − Cᵢⱼ)/σ) + σ·ln sᵢ
    /// ```
    pub fn gauss_seidel_sweep(
        &self,
        alpha: &Array1<f64>,
        beta: &Array1<f64>,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let (m, n) = self.cost.dim();
        if alpha.len() != n || beta.len() != m {
            return Err(Error::DimensionMismatch {
                expected: n + m,
                got: alpha.len() + beta.len(),
            });
        }
        let sigma = self.sigma;
        let mut alpha_next = alpha.clone();
        for j in 0..n {
            let mut sum = 0.0;
            for i in 0..m {
                sum += ((alpha[j] + beta[i] - self.cost[(i, j)]) / sigma).exp();
            }
            if !(sum > 0.0 && sum.is_finite()) {
                return Err(Error::Numeric(format!(
                    "column gradient {sum} left (0, inf) in the alpha block"
                )));
            }
            alpha_next[j] = alpha[j] - sigma * sum.ln() + sigma * self.r[j].ln();
        }
        let mut beta_next = beta.clone();
        for i in 0..m {
            let mut sum = 0.0;
            for j in 0..n {
                sum += ((alpha_next[j] + beta[i] - self.cost[(i, j)]) / sigma).exp();
            }
            if !(sum > 0.0 && sum.is_finite()) {
                return Err(Error::Numeric(format!(
                    "row gradient {sum} left (0, inf) in the beta block"
                )));
            }
            beta_next[i] = beta[i] - sigma * sum.ln() + sigma * self.s[i].ln();
        }
        Ok((alpha_next, beta_next))
    }
}

fn sigma_of(ot: &OtDual) -> f64 {
    ot.sigma
}

/// Reference-function family tag for the smoothness-constant calculus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceFamily {
    Euclidean,
    Exp,
    SymLogistic,
}

impl ReferenceFamily {
    /// Whether the dual Bregman distance of the family is jointly convex,
    /// which the averaging rule requires.
    pub fn dual_jointly_convex(self) -> bool {
        matches!(
            self,
            ReferenceFamily::Euclidean | ReferenceFamily::SymLogistic
        )
    }
}

/// Rules for deriving the smoothness constant of a composite objective from
/// the constants of its pieces.
#[derive(Debug, Clone)]
pub enum ConstantRule {
    /// `f(x) = Σᵢ fᵢ(x_blockᵢ)` with `fᵢ` smooth relative to `φᵢ` with
    /// constant `Lᵢ`: the sum has constant `1` relative to the product of
    /// the blocks epi-scaled by `1/Lᵢ` (see [`separable_product_reference`]).
    Separable { block_constants: Vec<f64> },
    /// A constant may always be relaxed upward: `L₂ ≥ L₁` inherits the
    /// inequality.
    Relax { from: f64, to: f64 },
    /// `f = Σᵢ wᵢ fᵢ` with convex weights summing to one, all pieces sharing
    /// one reference whose dual Bregman distance is jointly convex: the
    /// combination is smooth with `max Lᵢ`.
    Average {
        weights: Vec<f64>,
        constants: Vec<f64>,
        family: ReferenceFamily,
    },
    /// Conic combinations `f = Σᵢ wᵢ fᵢ` with `wᵢ ≥ 0` summing positive are
    /// admissible under the `exp` family specifically, again with `max Lᵢ`.
    ConicExp {
        weights: Vec<f64>,
        constants: Vec<f64>,
    },
    /// Re-declaring `ψ = a·φ + ⟨v, ·⟩` leaves the constant unchanged.
    TiltScale { constant: f64 },
}

/// Combine smoothness constants according to a [`ConstantRule`], validating
/// the rule's hypotheses.
pub fn combine_constants(rule: &ConstantRule) -> Result<f64> {
    fn positive(cs: &[f64]) -> Result<()> {
        if cs.is_empty() {
            return Err(Error::InvalidParameter(
                "the calculus needs at least one constant".into(),
            ));
        }
        for l in cs {
            if !l.is_finite() || *l <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "smoothness constants must be positive and finite, got {l}"
                )));
            }
        }
        Ok(())
    }
    match rule {
        ConstantRule::Separable { block_constants } => {
            positive(block_constants)?;
            Ok(1.0)
        }
        ConstantRule::Relax { from, to } => {
            positive(&[*from])?;
            if !to.is_finite() || to < from {
                return Err(Error::Calculus(format!(
                    "a constant can only be relaxed upward: {from} -> {to}"
                )));
            }
            Ok(*to)
        }
        ConstantRule::Average {
            weights,
            constants,
            family,
        } => {
            positive(constants)?;
            if weights.len() != constants.len() {
                return Err(Error::DimensionMismatch {
                    expected: constants.len(),
                    got: weights.len(),
                });
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidParameter(
                    "averaging weights must be nonnegative".into(),
                ));
            }
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "averaging weights must sum to one, got {total}"
                )));
            }
            if !family.dual_jointly_convex() {
                return Err(Error::Calculus(format!(
                    "averaging needs a jointly convex dual Bregman distance, which the \
                     {family:?} family does not certify; use the conic rule for exp"
                )));
            }
            Ok(constants.iter().fold(0.0f64, |acc, l| acc.max(*l)))
        }
        ConstantRule::ConicExp { weights, constants } => {
            positive(constants)?;
            if weights.len() != constants.len() {
                return Err(Error::DimensionMismatch {
                    expected: constants.len(),
                    got: weights.len(),
                });
            }
            if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidParameter(
                    "conic weights must be nonnegative".into(),
                ));
            }
            if weights.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidParameter(
                    "conic weights must sum to a positive value".into(),
                ));
            }
            Ok(constants.iter().fold(0.0f64, |acc, l| acc.max(*l)))
        }
        ConstantRule::TiltScale { constant } => {
            positive(&[*constant])?;
            Ok(*constant)
        }
    }
}

/// The product reference realizing the separable rule: block `i` enters
/// epi-scaled by `1/Lᵢ`, so the blockwise sum is `1`-smooth relative to the
/// result.
pub fn separable_product_reference(
    blocks: Vec<(ReferenceFunction, f64)>,
) -> Result<ReferenceFunction> {
    let mut scaled = Vec::with_capacity(blocks.len());
    for (phi, l) in blocks {
        if !l.is_finite() || l <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "smoothness constants must be positive and finite, got {l}"
            )));
        }
        scaled.push((phi, 1.0 / l));
    }
    ReferenceFunction::product(scaled)
}

/// Signed violation `f(x) − rhs(x, x̄)` of the anisotropic descent
/// inequality at step `1/L`,
///
/// ```text
/// f(x) ≤ f(x̄) + (λ⋆φ)(x − x̄ + λ·∇φ*(∇f(x̄))) − (λ⋆φ)(λ·∇φ*(∇f(x̄))),
/// λ = 1/L,
/// ```
///
/// using the objective's declared reference and constant. Nonpositive
/// values confirm the inequality at this pair; the violation is exactly
/// zero at `x = x̄`.
pub fn descent_violation(
    f: &SmoothObjective,
    x: &Array1<f64>,
    x_bar: &Array1<f64>,
) -> Result<f64> {
    let l = f.smoothness().ok_or_else(|| {
        Error::InvalidParameter("descent checks need a declared smoothness constant".into())
    })?;
    if x.len() != f.dim() || x_bar.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.len().max(x_bar.len()),
        });
    }
    let lambda = 1.0 / l;
    let phi = f.reference();
    let grad = f.grad(x_bar);
    if grad.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric(
            "gradient evaluation produced a non-finite value".into(),
        ));
    }
    let step = phi.conj_grad(&grad)?;
    let mut displaced = Array1::zeros(f.dim());
    let mut forward = Array1::zeros(f.dim());
    for j in 0..f.dim() {
        forward[j] = lambda * step[j];
        displaced[j] = (x[j] - x_bar[j]) + forward[j];
    }
    let epi = phi.epi_scale(lambda);
    // Grouping the two value terms and the two envelope terms separately
    // keeps the violation exactly zero at coincident pairs, where both
    // differences vanish bitwise.
    let value_gap = f.value(x) - f.value(x_bar);
    let epi_gap = epi.value(&displaced) - epi.value(&forward);
    let violation = value_gap - epi_gap;
    if !violation.is_finite() {
        return Err(Error::Numeric(format!(
            "descent bound evaluated to {violation}"
        )));
    }
    Ok(violation)
}

/// Outcome of a randomized sweep over the descent inequality.
#[derive(Debug, Clone)]
pub struct SamplerReport {
    /// Largest signed violation seen; at or below the tolerance confirms
    /// the declared constant empirically.
    pub worst_violation: f64,
    /// Largest `|violation|` at coincident pairs `x = x̄`, where the
    /// inequality is tight; exact arithmetic gives zero.
    pub tightness_residual: f64,
    /// Pairs skipped because a gradient left the conjugate domain or a
    /// value overflowed; skipped pairs carry no violation information.
    pub skipped: usize,
    /// Pairs that produced a finite violation.
    pub evaluated: usize,
}

/// Draw `pairs` independent point pairs (per-pair seeded streams of a
/// counter-based generator, coordinates scaled by a factor cycling through
/// `{0.5, 1, 2, 4}`) and evaluate [`descent_violation`] at each, plus the
/// tight coincident pair.
pub fn descent_inequality_sampler(
    f: &SmoothObjective,
    pairs: usize,
    seed: u64,
) -> Result<SamplerReport> {
    if f.smoothness().is_none() {
        return Err(Error::InvalidParameter(
            "descent checks need a declared smoothness constant".into(),
        ));
    }
    let n = f.dim();
    let mut report = SamplerReport {
        worst_violation: f64::NEG_INFINITY,
        tightness_residual: 0.0,
        skipped: 0,
        evaluated: 0,
    };
    for pair in 0..pairs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(pair as u64);
        let scale = [0.5, 1.0, 2.0, 4.0][rng.random_range(0..4usize)];
        let draw = |rng: &mut ChaCha8Rng| {
            Array1::from_iter((0..n).map(|_| {
                let t: f64 = StandardNormal.sample(rng);
                scale * t
            }))
        };
        let x = draw(&mut rng);
        let x_bar = draw(&mut rng);
        match descent_violation(f, &x, &x_bar) {
            Ok(v) => {
                report.evaluated += 1;
                report.worst_violation = report.worst_violation.max(v);
            }
            Err(
                Error::ConjugateDomain { .. }
                | Error::ConstraintQualification { .. }
                | Error::Numeric(_),
            ) => {
                report.skipped += 1;
                continue;
            }
            Err(other) => return Err(other),
        }
        match descent_violation(f, &x_bar, &x_bar) {
            Ok(v) => report.tightness_residual = report.tightness_residual.max(v.abs()),
            Err(
                Error::ConjugateDomain { .. }
                | Error::ConstraintQualification { .. }
                | Error::Numeric(_),
            ) => report.skipped += 1,
            Err(other) => return Err(other),
        }
    }
    if report.evaluated == 0 {
        report.worst_violation = f64::NAN;
    }
    Ok(report)
}

/// Second-order dual certificate of anisotropic strong convexity for scalar
/// problems: `g` is `μ`-strongly convex relative to the scalar reference
/// `φ` on the sampled grid when
///
/// ```text
/// (1/μ)·(φ*)″(t) − (g*)″(t) ≥ −1e-12    for every grid point t,
/// ```
///
/// i.e. `g* − (1/μ)·φ*` stays concave in the dual. Grid points must lie in
/// the interior of `dom φ*`.
pub fn strong_convexity_dual_check(
    phi: &ReferenceFunction,
    mu: f64,
    g_conj_second: impl Fn(f64) -> f64,
    grid: &[f64],
) -> Result<bool> {
    if phi.dim() != 1 {
        return Err(Error::InvalidParameter(format!(
            "the dual certificate is scalar; got a reference of dimension {}",
            phi.dim()
        )));
    }
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "strong-convexity modulus must be positive, got {mu}"
        )));
    }
    if grid.is_empty() {
        return Err(Error::InvalidParameter(
            "the dual certificate needs a nonempty grid".into(),
        ));
    }
    let component = phi.scalar_components()?[0];
    for &t in grid {
        let Some(phi_second) = component.conj_second(t) else {
            return Err(Error::InvalidParameter(format!(
                "grid point {t} lies outside the interior of the conjugate domain"
            )));
        };
        if phi_second / mu - g_conj_second(t) < -1e-12 {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{run_fixed, SolveStatus, SolverConfig};
    use ndarray::array;

    fn sample_logistic() -> (SmoothObjective, Regularizer) {
        let features = array![
            [0.8, -0.4, 0.1],
            [-0.3, 0.9, -0.7],
            [0.5, 0.5, 0.5],
            [-1.0, 0.2, 0.6],
        ];
        let labels = array![1.0, -1.0, 1.0, -1.0];
        build_logistic(features, labels, Penalty::L1(0.05)).unwrap()
    }

    #[test]
    fn logistic_gradient_and_constant() {
        let (f, _) = build_logistic(array![[1.0]], array![1.0], Penalty::None).unwrap();
        // f(x) = softplus(−x), so f′(0) = −σ(0) = −1/2.
        let g = f.grad(&array![0.0]);
        assert!((g[0] + 0.5).abs() <= 1e-15, "{}", g[0]);
        assert_eq!(f.smoothness(), Some(1.0));

        let (f, _) = build_logistic(array![[0.6, 0.8]], array![-1.0], Penalty::None).unwrap();
        assert!((f.smoothness().unwrap() - 1.0).abs() <= 1e-15);

        // A degenerate all-zero row floors the constant instead of zeroing it.
        let (f, _) = build_logistic(array![[0.0, 0.0]], array![1.0], Penalty::None).unwrap();
        assert_eq!(f.smoothness(), Some(1e-12));
    }

    #[test]
    fn logistic_rejects_bad_data() {
        assert!(build_logistic(array![[1.5]], array![1.0], Penalty::None).is_err());
        assert!(build_logistic(array![[0.5]], array![0.0], Penalty::None).is_err());
        assert!(build_logistic(array![[0.5]], array![1.0], Penalty::L1(-1.0)).is_err());
        assert!(build_logistic(array![[0.5]], array![1.0, -1.0], Penalty::None).is_err());
    }

    #[test]
    fn logistic_gradients_stay_strictly_inside_the_dual_box() {
        let (f, _) = sample_logistic();
        for x in [
            array![0.0, 0.0, 0.0],
            array![10.0, -10.0, 10.0],
            array![-50.0, 50.0, -50.0],
        ] {
            let g = f.grad(&x);
            for t in g.iter() {
                assert!(t.abs() < 1.0, "gradient component {t} escaped (-1, 1)");
            }
        }
    }

    #[test]
    fn logistic_gradient_matches_finite_differences() {
        let (f, _) = sample_logistic();
        for x in [array![0.3, -0.2, 0.9], array![-1.4, 0.8, 0.1]] {
            assert!(f.gradient_fd_error(&x) <= 1e-7, "{}", f.gradient_fd_error(&x));
        }
    }

    #[test]
    fn exp_lp_builder_validates_and_differentiates() {
        let a = array![[1.0, 0.0], [0.5, 0.25]];
        let b = array![0.5, -0.5];
        let c = array![-1.0, -2.0];
        let (f, g) = build_exp_lp(a.clone(), b.clone(), c.clone(), 0.5).unwrap();
        // L = max row sum / σ = 1.0/0.5.
        assert!((f.smoothness().unwrap() - 2.0).abs() <= 1e-15);
        assert_eq!(g.dim(), 2);
        for x in [array![0.0, 0.0], array![0.4, -0.3]] {
            assert!(f.gradient_fd_error(&x) <= 1e-6);
            assert!(f.grad(&x).iter().all(|t| *t > 0.0));
        }

        let neg = array![[-0.1, 0.2], [0.3, 0.4]];
        assert!(build_exp_lp(neg, b.clone(), c.clone(), 0.5).is_err());
        let zero_col = array![[1.0, 0.0], [0.5, 0.0]];
        assert!(build_exp_lp(zero_col, b.clone(), c.clone(), 0.5).is_err());
        let bad_cost = array![-1.0, 0.0];
        assert!(build_exp_lp(a, b, bad_cost, 0.5).is_err());
    }

    fn sample_lifted() -> (Array2<f64>, Array1<f64>, Array1<f64>, LiftedExpLp) {
        let a = array![[1.0, -0.5], [-0.25, 0.75], [0.5, 0.5]];
        let b = array![0.2, -0.1, 0.3];
        let c = array![0.4, -0.6];
        let model = build_lifted_exp_lp(&a, b.clone(), &c, 0.5, 1e-8).unwrap();
        (a, b, c, model)
    }

    #[test]
    fn lifting_reconstructs_the_original_data() {
        let (a, _, c, model) = sample_lifted();
        assert!(model.reconstruction_error(&a, &c) <= 1e-12);
        let (ap, am) = model.split_matrices();
        assert!(ap.iter().all(|t| *t > 0.0) && am.iter().all(|t| *t > 0.0));
    }

    #[test]
    fn lifting_requires_epsilon_for_one_sided_columns() {
        // Column 0 is entirely nonnegative, so its negative part vanishes
        // without a shift.
        let a = array![[1.0, -0.5], [0.5, 0.25]];
        let b = array![0.0, 0.0];
        let c = array![0.0, 0.0];
        let err = build_lifted_exp_lp(&a, b.clone(), &c, 1.0, 0.0).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert!(build_lifted_exp_lp(&a, b, &c, 1.0, 1e-8).is_ok());
    }

    #[test]
    fn pair_objective_agrees_with_the_original_on_consensus_points() {
        let (a, b, c, model) = sample_lifted();
        let pair = model.smooth_objective();
        let sigma = model.sigma();
        for x in [array![0.0, 0.0], array![0.3, -0.7], array![-1.2, 0.4]] {
            let z = model.embed(&x);
            let lifted = pair.value(&z);
            let margins = a.dot(&x);
            let direct = margins
                .iter()
                .zip(b.iter())
                .map(|(t, bi)| ((t - bi) / sigma).exp())
                .sum::<f64>()
                * sigma
                + c.dot(&x);
            assert!(
                (lifted - direct).abs() <= 1e-10 * (1.0 + direct.abs()),
                "{lifted} vs {direct}"
            );
            let total = model.smooth_total_objective();
            assert!((total.value(&x) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
            assert!(pair.gradient_fd_error(&z) <= 1e-6);
        }
    }

    #[test]
    fn parallel_update_replays_the_lifted_driver() {
        let (_, _, _, model) = sample_lifted();
        let lambda = 1.0 / model.smoothness();
        let f = model.smooth_objective();
        let g = model.regularizer();
        let x0 = array![0.25, -0.5];

        let mut x = x0.clone();
        for steps in 1..=10usize {
            let config = SolverConfig::fixed(lambda)
                .with_max_iter(steps)
                .with_gap_tol(-1.0);
            let trace = run_fixed(&f, &g, &config, &model.embed(&x0)).unwrap();
            assert_eq!(trace.status, SolveStatus::MaxIterations);
            let update = model.parallel_update_step(lambda, &x).unwrap();
            assert_eq!(update.floor_events, 0);
            x = update.point;
            let front = model.restrict(&trace.final_point);
            for (lhs, rhs) in x.iter().zip(front.iter()) {
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
                    "step {steps}: parallel {lhs} vs lifted {rhs}"
                );
            }
            for j in 0..model.dim() {
                let z = &trace.final_point;
                assert_eq!(z[j].to_bits(), (-z[model.dim() + j]).to_bits());
            }
        }
    }

    #[test]
    fn margin_separation_case_zeros_in_one_step() {
        // One feature judged by two opposite-sign observations, no offsets,
        // no costs, unit smoothing: the split needs no shift, the constant
        // is 1, and a unit step from any start lands exactly on 0.
        let a = array![[1.0], [-1.0]];
        let model =
            build_lifted_exp_lp(&a, array![0.0, 0.0], &array![0.0], 1.0, 0.0).unwrap();
        assert_eq!(model.smoothness(), 1.0);
        let update = model.parallel_update_step(1.0, &array![5.0]).unwrap();
        assert!(update.point[0].abs() <= 1e-12, "{}", update.point[0]);
        let fixed = model.parallel_update_step(1.0, &array![0.0]).unwrap();
        assert_eq!(fixed.point[0], 0.0);
    }

    #[test]
    fn parallel_update_floors_vanishing_gradients() {
        // One strongly negative variable drives the first residual weight
        // to an exact zero underflow; the positive split column then sums
        // to zero and must be floored before the logarithm.
        let a = array![[1.0], [-1e-3]];
        let model =
            build_lifted_exp_lp(&a, array![0.0, 0.0], &array![0.0], 1.0, 0.0).unwrap();
        let update = model.parallel_update_step(0.5, &array![-750.0]).unwrap();
        assert!(update.floor_events >= 1, "{}", update.floor_events);
        assert!(update.point[0].is_finite());
        assert!(update.point[0] > -750.0, "the step should move away from the floor");
    }

    fn sample_ot() -> OtDual {
        let cost = array![[0.2, 1.0, 0.5], [0.8, 0.1, 0.3], [0.4, 0.6, 0.9]];
        build_ot_dual(
            cost,
            array![0.3, 0.4, 0.3],
            array![0.25, 0.45, 0.3],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn ot_builder_validates() {
        assert!(build_ot_dual(array![[1.0]], array![1.0], array![1.0], 0.0).is_err());
        assert!(build_ot_dual(array![[1.0]], array![0.0], array![1.0], 1.0).is_err());
        assert!(build_ot_dual(array![[1.0]], array![1.0, 2.0], array![1.0], 1.0).is_err());
        assert!(build_ot_dual(array![[f64::NAN]], array![1.0], array![1.0], 1.0).is_err());
    }

    #[test]
    fn ot_joint_gradient_matches_finite_differences() {
        let ot = sample_ot();
        let (f, g) = ot.joint();
        assert_eq!(f.dim(), 6);
        assert_eq!(g.dim(), 6);
        assert!((f.smoothness().unwrap() - 4.0).abs() <= 1e-15);
        for u in [
            Array1::zeros(6),
            array![0.1, -0.2, 0.3, -0.1, 0.2, -0.3],
        ] {
            assert!(f.gradient_fd_error(&u) <= 1e-6);
        }
    }

    #[test]
    fn one_by_one_transport_fixes_after_a_single_sweep() {
        let ot = build_ot_dual(array![[0.7]], array![0.6], array![0.6], 0.25).unwrap();
        let (a1, b1) = ot
            .gauss_seidel_sweep(&array![0.2], &array![-0.1])
            .unwrap();
        // The optimality condition is exp((α+β−c)/σ) = r = s; one sweep
        // reaches the set of minimizers and stays there.
        let plan = ot.plan(&a1, &b1);
        assert!((plan[(0, 0)] - 0.6).abs() <= 1e-12);
        let (a2, b2) = ot.gauss_seidel_sweep(&a1, &b1).unwrap();
        assert!((a2[0] - a1[0]).abs() <= 1e-12 && (b2[0] - b1[0]).abs() <= 1e-12);
    }

    #[test]
    fn gauss_seidel_matches_an_independent_sinkhorn_oracle() {
        let ot = sample_ot();
        let (m, n) = ot.dims();
        let sigma = ot.sigma;
        // Scaling-form Sinkhorn on the Gibbs kernel, kept deliberately
        // separate from the potential-form sweep above.
        let kernel = ot.cost.mapv(|cij| (-cij / sigma).exp());
        let mut u = Array1::<f64>::ones(n);
        let mut v = Array1::<f64>::ones(m);
        let mut alpha = Array1::<f64>::zeros(n);
        let mut beta = Array1::<f64>::zeros(m);
        for _ in 0..60 {
            let ktv = kernel.t().dot(&v);
            for j in 0..n {
                u[j] = ot.r[j] / ktv[j];
            }
            let ku = kernel.dot(&u);
            for i in 0..m {
                v[i] = ot.s[i] / ku[i];
            }
            let (an, bn) = ot.gauss_seidel_sweep(&alpha, &beta).unwrap();
            alpha = an;
            beta = bn;
            for j in 0..n {
                let oracle = sigma * u[j].ln();
                assert!(
                    (alpha[j] - oracle).abs() <= 1e-9,
                    "alpha {} vs oracle {oracle}",
                    alpha[j]
                );
            }
            for i in 0..m {
                let oracle = sigma * v[i].ln();
                assert!(
                    (beta[i] - oracle).abs() <= 1e-9,
                    "beta {} vs oracle {oracle}",
                    beta[i]
                );
            }
        }
    }

    #[test]
    fn joint_ot_run_reaches_marginal_feasibility() {
        let ot = sample_ot();
        let (f, g) = ot.joint();
        let lambda = ot.sigma() / 2.0;
        let config = SolverConfig::fixed(lambda)
            .with_max_iter(20_000)
            .with_gap_tol(1e-13);
        let trace = run_fixed(&f, &g, &config, &Array1::zeros(6)).unwrap();
        assert_eq!(trace.status, SolveStatus::GapConverged);
        let (m, n) = ot.dims();
        let alpha = trace.final_point.slice(s![..n]).to_owned();
        let beta = trace.final_point.slice(s![n..]).to_owned();
        let plan = ot.plan(&alpha, &beta);
        for j in 0..n {
            let col: f64 = (0..m).map(|i| plan[(i, j)]).sum();
            assert!((col - ot.r[j]).abs() <= 1e-6, "column {j}: {col}");
        }
        for i in 0..m {
            let row: f64 = (0..n).map(|j| plan[(i, j)]).sum();
            assert!((row - ot.s[i]).abs() <= 1e-6, "row {i}: {row}");
        }
    }

    #[test]
    fn constant_calculus_rules() {
        assert_eq!(
            combine_constants(&ConstantRule::Separable {
                block_constants: vec![2.0, 4.0]
            })
            .unwrap(),
            1.0
        );
        assert_eq!(
            combine_constants(&ConstantRule::Relax { from: 2.0, to: 3.0 }).unwrap(),
            3.0
        );
        assert!(combine_constants(&ConstantRule::Relax { from: 3.0, to: 2.0 }).is_err());
        assert_eq!(
            combine_constants(&ConstantRule::Average {
                weights: vec![0.5, 0.5],
                constants: vec![2.0, 3.0],
                family: ReferenceFamily::SymLogistic
            })
            .unwrap(),
            3.0
        );
        assert!(combine_constants(&ConstantRule::Average {
            weights: vec![0.5, 0.5],
            constants: vec![2.0, 3.0],
            family: ReferenceFamily::Exp
        })
        .is_err());
        assert!(combine_constants(&ConstantRule::Average {
            weights: vec![0.7, 0.7],
            constants: vec![2.0, 3.0],
            family: ReferenceFamily::Euclidean
        })
        .is_err());
        assert_eq!(
            combine_constants(&ConstantRule::ConicExp {
                weights: vec![1.0, 2.0],
                constants: vec![2.0, 5.0]
            })
            .unwrap(),
            5.0
        );
        assert!(combine_constants(&ConstantRule::ConicExp {
            weights: vec![0.0, 0.0],
            constants: vec![2.0, 5.0]
        })
        .is_err());
        assert_eq!(
            combine_constants(&ConstantRule::TiltScale { constant: 5.0 }).unwrap(),
            5.0
        );

        let phi = separable_product_reference(vec![(
            ReferenceFunction::euclidean_unit(1).unwrap(),
            0.5,
        )])
        .unwrap();
        // Epi-scale 1/L = 2: the block contributes 2·φ(x/2).
        assert!((phi.value(&array![2.0]) - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn descent_sampler_confirms_logistic_and_detects_halved_constants() {
        let (f, _) = sample_logistic();
        let report = descent_inequality_sampler(&f, 2_000, 7).unwrap();
        assert_eq!(report.skipped, 0);
        assert_eq!(report.evaluated, 2_000);
        assert!(
            report.worst_violation <= 1e-8,
            "violation {}",
            report.worst_violation
        );
        assert_eq!(report.tightness_residual, 0.0);

        // The exp-family constant is tight — with it halved the inequality
        // fails at essentially every sampled pair, so the sweep must flag it.
        let (f, _) = build_exp_lp(
            array![[1.0, 0.5], [0.25, 1.0]],
            array![0.0, 0.4],
            array![-1.0, -0.5],
            1.0,
        )
        .unwrap();
        let honest = descent_inequality_sampler(&f, 2_000, 7).unwrap();
        assert!(honest.evaluated > 0);
        assert!(
            honest.worst_violation <= 1e-8,
            "violation {}",
            honest.worst_violation
        );
        let halved = f
            .with_reference(
                f.reference().clone(),
                Some(f.smoothness().unwrap() / 2.0),
            )
            .unwrap();
        let broken = descent_inequality_sampler(&halved, 2_000, 7).unwrap();
        assert!(
            broken.worst_violation > 1e-8,
            "halved constant went undetected: {}",
            broken.worst_violation
        );
    }

    #[test]
    fn descent_sampler_is_deterministic_per_seed() {
        let (f, _) = sample_logistic();
        let a = descent_inequality_sampler(&f, 200, 3).unwrap();
        let b = descent_inequality_sampler(&f, 200, 3).unwrap();
        assert_eq!(a.worst_violation.to_bits(), b.worst_violation.to_bits());
        let c = descent_inequality_sampler(&f, 200, 4).unwrap();
        assert_ne!(a.worst_violation.to_bits(), c.worst_violation.to_bits());
    }

    #[test]
    fn descent_violation_is_invariant_under_ot_potential_shifts() {
        let ot = sample_ot();
        let (f, _) = ot.joint();
        let x = array![0.1, -0.2, 0.3, -0.1, 0.2, -0.3];
        let x_bar = array![-0.3, 0.1, 0.0, 0.2, -0.2, 0.1];
        let base = descent_violation(&f, &x, &x_bar).unwrap();
        for t in [-2.0, 0.7, 5.0] {
            let shift = |u: &Array1<f64>| {
                let mut v = u.clone();
                for j in 0..3 {
                    v[j] += t;
                }
                for i in 3..6 {
                    v[i] -= t;
                }
                v
            };
            let shifted = descent_violation(&f, &shift(&x), &shift(&x_bar)).unwrap();
            assert!(
                (shifted - base).abs() <= 1e-9 * (1.0 + base.abs()),
                "shift {t}: {shifted} vs {base}"
            );
        }
    }

    #[test]
    fn exp_family_descent_holds_for_the_lp_model() {
        let a = array![[1.0, 0.0], [0.5, 0.25]];
        let (f, _) = build_exp_lp(a, array![0.5, -0.5], array![-1.0, -2.0], 0.5).unwrap();
        let report = descent_inequality_sampler(&f, 1_000, 11).unwrap();
        assert!(report.evaluated > 0);
        assert!(
            report.worst_violation <= 1e-8,
            "violation {}",
            report.worst_violation
        );
    }

    #[test]
    fn dual_certificate_for_strong_convexity() {
        let phi = ReferenceFunction::sym_logistic(1).unwrap();
        let grid: Vec<f64> = (-9..=9).map(|k| k as f64 / 10.0).collect();
        let nu = 0.4;
        // g = ν/2·t² has (g*)″ = 1/ν; the certificate is exact at μ = 2ν.
        assert!(
            strong_convexity_dual_check(&phi, 2.0 * nu, |_| 1.0 / nu, &grid).unwrap()
        );
        assert!(
            !strong_convexity_dual_check(&phi, 2.0 * nu + 0.1, |_| 1.0 / nu, &grid).unwrap()
        );
        // g = ν|t| has a flat dual on its box, so any modulus certifies.
        assert!(strong_convexity_dual_check(&phi, 100.0, |_| 0.0, &grid).unwrap());
        // Grid points outside the conjugate domain are rejected.
        assert!(strong_convexity_dual_check(&phi, 1.0, |_| 0.0, &[1.5]).is_err());
    }
}
