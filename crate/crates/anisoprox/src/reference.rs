//! Legendre reference functions and their convex conjugates.
//!
//! A reference function `φ` plays the role of a dual-space preconditioner:
//! forward steps move along `∇φ*` applied to the gradient, and backward
//! steps measure proximity through the epi-scaled value `(λ ⋆ φ)(x) =
//! λ·φ(x/λ)`. Every shipped family is Legendre (essentially smooth and
//! strictly convex) with full primal domain, so `∇φ` is a bijection from
//! `ℝⁿ` onto the interior of `dom φ*` with inverse `∇φ*`.
//!
//! Shipped families:
//!
//! * [`ReferenceFunction::euclidean`] — `½⟨x, Mx⟩` with diagonal positive
//!   weights `M`; conjugate domain is all of `ℝⁿ`.
//! * [`ReferenceFunction::exp`] — `Σⱼ exp(xⱼ)`; the conjugate is the
//!   negative entropy `Σⱼ yⱼ ln yⱼ − yⱼ` on the nonnegative orthant and its
//!   gradient `ln` is defined on the positive orthant.
//! * [`ReferenceFunction::sym_logistic`] — `Σⱼ h(xⱼ)` with
//!   `h(t) = 2·ln(1+eᵗ) − t`; the conjugate is a shifted binary entropy on
//!   `[−1, 1]ⁿ` with gradient `ln((1+t)/(1−t))` on `(−1, 1)ⁿ`.
//!
//! Composite constructors [`ReferenceFunction::product`] (separable blocks,
//! each epi-scaled) and [`ReferenceFunction::tilt_scale`]
//! (`α·φ + ⟨c, ·⟩`) close the family under the calculus used by the model
//! builders.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Numerically stable `ln(1 + eᵗ)`.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Symmetrized logistic loss `h(t) = 2·ln(1+eᵗ) − t`, evaluated through the
/// overflow-free identity `h(t) = |t| + 2·ln(1+e^{−|t|})`.
pub(crate) fn sym_logistic_value(t: f64) -> f64 {
    t.abs() + 2.0 * softplus(-t.abs())
}

/// `h′(t) = tanh(t/2)`.
pub(crate) fn sym_logistic_deriv(t: f64) -> f64 {
    (0.5 * t).tanh()
}

/// `h″(t) = ½ sech²(t/2)`; underflows gracefully to `0` for large `|t|`.
pub(crate) fn sym_logistic_second(t: f64) -> f64 {
    let c = (0.5 * t).cosh();
    0.5 / (c * c)
}

/// Conjugate `h*(y) = (1+y)·ln((1+y)/2) + (1−y)·ln((1−y)/2)` on `[−1, 1]`
/// with the convention `0·ln 0 = 0`; `+∞` outside.
pub(crate) fn sym_logistic_conj(y: f64) -> f64 {
    if !(-1.0..=1.0).contains(&y) {
        return f64::INFINITY;
    }
    let term = |z: f64| if z > 0.0 { z * (0.5 * z).ln() } else { 0.0 };
    term(1.0 + y) + term(1.0 - y)
}

/// `(h*)′(y) = ln((1+y)/(1−y)) = 2·artanh(y)` on `(−1, 1)`.
pub(crate) fn sym_logistic_conj_deriv(y: f64) -> f64 {
    2.0 * y.atanh()
}

/// `(h*)″(y) = 2 / (1 − y²)`.
pub(crate) fn sym_logistic_conj_second(y: f64) -> f64 {
    2.0 / ((1.0 - y) * (1.0 + y))
}

/// Negative-entropy conjugate of `exp`: `y ln y − y` for `y ≥ 0` with
/// `0·ln 0 = 0`; `+∞` for `y < 0`.
pub(crate) fn neg_entropy(y: f64) -> f64 {
    if y < 0.0 {
        f64::INFINITY
    } else if y == 0.0 {
        0.0
    } else {
        y * y.ln() - y
    }
}

/// Scalar building block of a separable reference function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ScalarKind {
    /// `½·w·t²`
    Euclid { weight: f64 },
    /// `exp(t)`
    Exp,
    /// `2·ln(1+eᵗ) − t`
    SymLog,
}

impl ScalarKind {
    #[cfg(test)]
    pub(crate) fn value(self, t: f64) -> f64 {
        match self {
            ScalarKind::Euclid { weight } => 0.5 * weight * t * t,
            ScalarKind::Exp => t.exp(),
            ScalarKind::SymLog => sym_logistic_value(t),
        }
    }

    pub(crate) fn deriv(self, t: f64) -> f64 {
        match self {
            ScalarKind::Euclid { weight } => weight * t,
            ScalarKind::Exp => t.exp(),
            ScalarKind::SymLog => sym_logistic_deriv(t),
        }
    }

    pub(crate) fn second_deriv(self, t: f64) -> f64 {
        match self {
            ScalarKind::Euclid { weight } => weight,
            ScalarKind::Exp => t.exp(),
            ScalarKind::SymLog => sym_logistic_second(t),
        }
    }

    #[cfg(test)]
    pub(crate) fn conj_value(self, y: f64) -> f64 {
        match self {
            ScalarKind::Euclid { weight } => 0.5 * y * y / weight,
            ScalarKind::Exp => neg_entropy(y),
            ScalarKind::SymLog => sym_logistic_conj(y),
        }
    }

    /// `(κ*)′(y)` where defined (open conjugate domain), `None` outside.
    #[cfg(test)]
    pub(crate) fn conj_deriv(self, y: f64) -> Option<f64> {
        match self {
            ScalarKind::Euclid { weight } => Some(y / weight),
            ScalarKind::Exp => (y > 0.0).then(|| y.ln()),
            ScalarKind::SymLog => (y.abs() < 1.0).then(|| sym_logistic_conj_deriv(y)),
        }
    }

    /// `(κ*)″(y)` where defined, `None` outside the open conjugate domain.
    pub(crate) fn conj_second(self, y: f64) -> Option<f64> {
        match self {
            ScalarKind::Euclid { weight } => Some(1.0 / weight),
            ScalarKind::Exp => (y > 0.0).then(|| 1.0 / y),
            ScalarKind::SymLog => (y.abs() < 1.0).then(|| sym_logistic_conj_second(y)),
        }
    }

    /// Signed distance of `y` to the boundary of the open conjugate domain
    /// (positive inside, `+∞` when the domain is all of `ℝ`).
    #[cfg(test)]
    pub(crate) fn boundary_distance(self, y: f64) -> f64 {
        match self {
            ScalarKind::Euclid { .. } => f64::INFINITY,
            ScalarKind::Exp => y,
            ScalarKind::SymLog => 1.0 - y.abs(),
        }
    }

    /// Clamp `y` to the open conjugate domain, keeping a margin `eta` from
    /// the boundary. Returns the clamped value and whether it moved.
    pub(crate) fn clamp_interior(self, y: f64, eta: f64) -> (f64, bool) {
        match self {
            ScalarKind::Euclid { .. } => (y, false),
            ScalarKind::Exp => {
                if y < eta {
                    (eta, true)
                } else {
                    (y, false)
                }
            }
            ScalarKind::SymLog => {
                if y > 1.0 - eta {
                    (1.0 - eta, true)
                } else if y < -1.0 + eta {
                    (-1.0 + eta, true)
                } else {
                    (y, false)
                }
            }
        }
    }
}

/// One coordinate of a separable reference function: the component behaves
/// as the epi-scaling `scale ⋆ κ`, i.e. `t ↦ scale·κ(t/scale)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScalarComponent {
    pub kind: ScalarKind,
    pub scale: f64,
}

impl ScalarComponent {
    #[cfg(test)]
    pub(crate) fn value(self, t: f64) -> f64 {
        self.scale * self.kind.value(t / self.scale)
    }

    #[cfg(test)]
    pub(crate) fn deriv(self, t: f64) -> f64 {
        self.kind.deriv(t / self.scale)
    }

    #[cfg(test)]
    pub(crate) fn second_deriv(self, t: f64) -> f64 {
        self.kind.second_deriv(t / self.scale) / self.scale
    }

    /// `(scale ⋆ κ)* = scale·κ*`.
    #[cfg(test)]
    pub(crate) fn conj_value(self, y: f64) -> f64 {
        self.scale * self.kind.conj_value(y)
    }

    #[cfg(test)]
    pub(crate) fn conj_deriv(self, y: f64) -> Option<f64> {
        self.kind.conj_deriv(y).map(|d| self.scale * d)
    }

    pub(crate) fn conj_second(self, y: f64) -> Option<f64> {
        self.kind.conj_second(y).map(|d| self.scale * d)
    }
}

/// One block of a [`ReferenceFunction::product`]: `reference` enters the sum
/// epi-scaled by `scale`, contributing `scale·φ(x_block/scale)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductBlock {
    pub reference: ReferenceFunction,
    pub scale: f64,
}

/// A Legendre reference function with full primal domain.
#[derive(Debug, Clone, PartialEq)]
pub enum ReferenceFunction {
    /// `½⟨x, Mx⟩` with `M = diag(weights)`, `weights > 0`.
    Euclidean { weights: Array1<f64> },
    /// `Σⱼ exp(xⱼ)`.
    Exp { dim: usize },
    /// `Σⱼ h(xⱼ)` with `h(t) = 2·ln(1+eᵗ) − t`.
    SymLogistic { dim: usize },
    /// Separable sum of epi-scaled blocks over consecutive coordinate
    /// ranges: `φ(x) = Σᵢ scaleᵢ·φᵢ(x_blockᵢ/scaleᵢ)`.
    Product { blocks: Vec<ProductBlock> },
    /// `α·φ(x) + ⟨c, x⟩` for a base reference `φ`, `α > 0`.
    TiltScale {
        base: Box<ReferenceFunction>,
        alpha: f64,
        shift: Array1<f64>,
    },
}

fn slice(x: &Array1<f64>) -> &[f64] {
    x.as_slice()
        .expect("owned 1-D arrays are stored contiguously")
}

impl ReferenceFunction {
    /// Diagonal quadratic `½⟨x, diag(weights)·x⟩`; all weights must be
    /// strictly positive and finite.
    pub fn euclidean(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter(
                "euclidean reference needs at least one weight".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "euclidean weights must be positive and finite, got {w}"
            )));
        }
        Ok(ReferenceFunction::Euclidean { weights })
    }

    /// Unweighted Euclidean reference `½‖x‖²`.
    pub fn euclidean_unit(dim: usize) -> Result<Self> {
        Self::euclidean(Array1::ones(dim))
    }

    /// `Σⱼ exp(xⱼ)`.
    pub fn exp(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "exp reference needs dim >= 1".into(),
            ));
        }
        Ok(ReferenceFunction::Exp { dim })
    }

    /// `Σⱼ h(xⱼ)` with the symmetrized logistic loss `h`.
    pub fn sym_logistic(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "sym_logistic reference needs dim >= 1".into(),
            ));
        }
        Ok(ReferenceFunction::SymLogistic { dim })
    }

    /// Separable product of epi-scaled blocks; every scale must be strictly
    /// positive. The block order fixes the coordinate layout.
    pub fn product(blocks: Vec<(ReferenceFunction, f64)>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter(
                "product reference needs at least one block".into(),
            ));
        }
        if let Some((_, s)) = blocks.iter().find(|(_, s)| !s.is_finite() || *s <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "product block scales must be positive and finite, got {s}"
            )));
        }
        Ok(ReferenceFunction::Product {
            blocks: blocks
                .into_iter()
                .map(|(reference, scale)| ProductBlock { reference, scale })
                .collect(),
        })
    }

    /// Pointwise scaling and tilting `α·φ + ⟨c, ·⟩` with `α > 0`.
    pub fn tilt_scale(base: ReferenceFunction, alpha: f64, shift: Array1<f64>) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tilt_scale needs alpha > 0, got {alpha}"
            )));
        }
        if shift.len() != base.dim() {
            return Err(Error::DimensionMismatch {
                expected: base.dim(),
                got: shift.len(),
            });
        }
        Ok(ReferenceFunction::TiltScale {
            base: Box::new(base),
            alpha,
            shift,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ReferenceFunction::Euclidean { weights } => weights.len(),
            ReferenceFunction::Exp { dim } | ReferenceFunction::SymLogistic { dim } => *dim,
            ReferenceFunction::Product { blocks } => {
                blocks.iter().map(|b| b.reference.dim()).sum()
            }
            ReferenceFunction::TiltScale { base, .. } => base.dim(),
        }
    }

    /// `φ(x)`.
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        self.value_slice(slice(x))
    }

    fn value_slice(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            ReferenceFunction::Euclidean { weights } => x
                .iter()
                .zip(weights.iter())
                .map(|(xj, wj)| 0.5 * wj * xj * xj)
                .sum(),
            ReferenceFunction::Exp { .. } => x.iter().map(|xj| xj.exp()).sum(),
            ReferenceFunction::SymLogistic { .. } => {
                x.iter().map(|xj| sym_logistic_value(*xj)).sum()
            }
            ReferenceFunction::Product { blocks } => {
                let mut total = 0.0;
                let mut offset = 0;
                for b in blocks {
                    let d = b.reference.dim();
                    let part = &x[offset..offset + d];
                    let scaled: Vec<f64> = part.iter().map(|t| t / b.scale).collect();
                    total += b.scale * b.reference.value_slice(&scaled);
                    offset += d;
                }
                total
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                alpha * base.value_slice(x)
                    + x.iter().zip(shift.iter()).map(|(xj, cj)| xj * cj).sum::<f64>()
            }
        }
    }

    /// `∇φ(x)`; maps `ℝⁿ` onto the interior of `dom φ*`.
    pub fn grad(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut out = vec![0.0; self.dim()];
        self.grad_slice(slice(x), &mut out);
        Array1::from(out)
    }

    fn grad_slice(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        match self {
            ReferenceFunction::Euclidean { weights } => {
                for ((o, xj), wj) in out.iter_mut().zip(x).zip(weights.iter()) {
                    *o = wj * xj;
                }
            }
            ReferenceFunction::Exp { .. } => {
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = xj.exp();
                }
            }
            ReferenceFunction::SymLogistic { .. } => {
                for (o, xj) in out.iter_mut().zip(x) {
                    *o = sym_logistic_deriv(*xj);
                }
            }
            ReferenceFunction::Product { blocks } => {
                let mut offset = 0;
                for b in blocks {
                    let d = b.reference.dim();
                    let scaled: Vec<f64> = x[offset..offset + d]
                        .iter()
                        .map(|t| t / b.scale)
                        .collect();
                    b.reference.grad_slice(&scaled, &mut out[offset..offset + d]);
                    offset += d;
                }
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                base.grad_slice(x, out);
                for (o, cj) in out.iter_mut().zip(shift.iter()) {
                    *o = alpha * *o + cj;
                }
            }
        }
    }

    /// `φ*(y)`; `+∞` outside the closed conjugate domain.
    pub fn conj_value(&self, y: &Array1<f64>) -> f64 {
        self.conj_value_slice(slice(y))
    }

    fn conj_value_slice(&self, y: &[f64]) -> f64 {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            ReferenceFunction::Euclidean { weights } => y
                .iter()
                .zip(weights.iter())
                .map(|(yj, wj)| 0.5 * yj * yj / wj)
                .sum(),
            ReferenceFunction::Exp { .. } => y.iter().map(|yj| neg_entropy(*yj)).sum(),
            ReferenceFunction::SymLogistic { .. } => {
                y.iter().map(|yj| sym_logistic_conj(*yj)).sum()
            }
            ReferenceFunction::Product { blocks } => {
                // (scale ⋆ φ)* = scale·φ*.
                let mut total = 0.0;
                let mut offset = 0;
                for b in blocks {
                    let d = b.reference.dim();
                    total += b.scale * b.reference.conj_value_slice(&y[offset..offset + d]);
                    offset += d;
                }
                total
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                // (αφ + ⟨c,·⟩)*(y) = α·φ*((y − c)/α).
                let inner: Vec<f64> = y
                    .iter()
                    .zip(shift.iter())
                    .map(|(yj, cj)| (yj - cj) / alpha)
                    .collect();
                alpha * base.conj_value_slice(&inner)
            }
        }
    }

    /// `∇φ*(y)`, the inverse of `∇φ`; errors with the first offending
    /// coordinate when `y` leaves the open conjugate domain.
    pub fn conj_grad(&self, y: &Array1<f64>) -> Result<Array1<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.conj_grad_slice(slice(y), 0, &mut out)?;
        Ok(Array1::from(out))
    }

    fn conj_grad_slice(&self, y: &[f64], index_base: usize, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(y.len(), self.dim());
        match self {
            ReferenceFunction::Euclidean { weights } => {
                for ((o, yj), wj) in out.iter_mut().zip(y).zip(weights.iter()) {
                    *o = yj / wj;
                }
                Ok(())
            }
            ReferenceFunction::Exp { .. } => {
                for (j, (o, yj)) in out.iter_mut().zip(y).enumerate() {
                    if !(*yj > 0.0) {
                        return Err(Error::ConjugateDomain {
                            index: index_base + j,
                            value: *yj,
                        });
                    }
                    *o = yj.ln();
                }
                Ok(())
            }
            ReferenceFunction::SymLogistic { .. } => {
                for (j, (o, yj)) in out.iter_mut().zip(y).enumerate() {
                    if !(yj.abs() < 1.0) {
                        return Err(Error::ConjugateDomain {
                            index: index_base + j,
                            value: *yj,
                        });
                    }
                    *o = sym_logistic_conj_deriv(*yj);
                }
                Ok(())
            }
            ReferenceFunction::Product { blocks } => {
                // ∇(scale·φ*)(y) = scale·∇φ*(y).
                let mut offset = 0;
                for b in blocks {
                    let d = b.reference.dim();
                    b.reference.conj_grad_slice(
                        &y[offset..offset + d],
                        index_base + offset,
                        &mut out[offset..offset + d],
                    )?;
                    for o in &mut out[offset..offset + d] {
                        *o *= b.scale;
                    }
                    offset += d;
                }
                Ok(())
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                // ∇ψ*(y) = ∇φ*((y − c)/α): the inverse of x ↦ α∇φ(x) + c.
                let inner: Vec<f64> = y
                    .iter()
                    .zip(shift.iter())
                    .map(|(yj, cj)| (yj - cj) / alpha)
                    .collect();
                base.conj_grad_slice(&inner, index_base, out)
            }
        }
    }

    /// Strict interior test for `dom φ*`, shrunk by `margin ≥ 0`.
    pub fn in_conj_interior(&self, y: &Array1<f64>, margin: f64) -> bool {
        self.in_conj_interior_slice(slice(y), margin)
    }

    fn in_conj_interior_slice(&self, y: &[f64], margin: f64) -> bool {
        match self {
            ReferenceFunction::Euclidean { .. } => y.iter().all(|yj| yj.is_finite()),
            ReferenceFunction::Exp { .. } => y.iter().all(|yj| *yj > margin),
            ReferenceFunction::SymLogistic { .. } => y.iter().all(|yj| yj.abs() < 1.0 - margin),
            ReferenceFunction::Product { blocks } => {
                let mut offset = 0;
                blocks.iter().all(|b| {
                    let d = b.reference.dim();
                    let ok = b
                        .reference
                        .in_conj_interior_slice(&y[offset..offset + d], margin);
                    offset += d;
                    ok
                })
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                let inner: Vec<f64> = y
                    .iter()
                    .zip(shift.iter())
                    .map(|(yj, cj)| (yj - cj) / alpha)
                    .collect();
                base.in_conj_interior_slice(&inner, margin / alpha)
            }
        }
    }

    /// Signed distance of `y` to the boundary of the open conjugate domain:
    /// positive inside, nonpositive outside, `+∞` when the domain is `ℝⁿ`.
    pub fn conj_boundary_distance(&self, y: &Array1<f64>) -> f64 {
        self.conj_boundary_distance_slice(slice(y))
    }

    fn conj_boundary_distance_slice(&self, y: &[f64]) -> f64 {
        match self {
            ReferenceFunction::Euclidean { .. } => f64::INFINITY,
            ReferenceFunction::Exp { .. } => y
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            ReferenceFunction::SymLogistic { .. } => y
                .iter()
                .map(|yj| 1.0 - yj.abs())
                .fold(f64::INFINITY, f64::min),
            ReferenceFunction::Product { blocks } => {
                let mut dist = f64::INFINITY;
                let mut offset = 0;
                for b in blocks {
                    let d = b.reference.dim();
                    dist = dist.min(
                        b.reference
                            .conj_boundary_distance_slice(&y[offset..offset + d]),
                    );
                    offset += d;
                }
                dist
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                let inner: Vec<f64> = y
                    .iter()
                    .zip(shift.iter())
                    .map(|(yj, cj)| (yj - cj) / alpha)
                    .collect();
                alpha * base.conj_boundary_distance_slice(&inner)
            }
        }
    }

    /// Clamp `y` toward the interior of `dom φ*` with margin `eta`,
    /// returning how many coordinates moved.
    pub fn clamp_to_conj_interior(&self, y: &mut Array1<f64>, eta: f64) -> usize {
        let ys = y
            .as_slice_mut()
            .expect("owned 1-D arrays are stored contiguously");
        self.clamp_slice(ys, eta)
    }

    fn clamp_slice(&self, y: &mut [f64], eta: f64) -> usize {
        match self {
            ReferenceFunction::Euclidean { .. } => 0,
            ReferenceFunction::Exp { .. } => {
                let mut n = 0;
                for yj in y.iter_mut() {
                    let (c, moved) = ScalarKind::Exp.clamp_interior(*yj, eta);
                    *yj = c;
                    n += moved as usize;
                }
                n
            }
            ReferenceFunction::SymLogistic { .. } => {
                let mut n = 0;
                for yj in y.iter_mut() {
                    let (c, moved) = ScalarKind::SymLog.clamp_interior(*yj, eta);
                    *yj = c;
                    n += moved as usize;
                }
                n
            }
            ReferenceFunction::Product { blocks } => {
                let mut n = 0;
                let mut rest = y;
                for b in blocks {
                    let (head, tail) = rest.split_at_mut(b.reference.dim());
                    n += b.reference.clamp_slice(head, eta);
                    rest = tail;
                }
                n
            }
            ReferenceFunction::TiltScale { base, alpha, shift } => {
                let mut inner: Vec<f64> = y
                    .iter()
                    .zip(shift.iter())
                    .map(|(yj, cj)| (yj - cj) / alpha)
                    .collect();
                let n = base.clamp_slice(&mut inner, eta / alpha);
                for ((yj, zj), cj) in y.iter_mut().zip(&inner).zip(shift.iter()) {
                    *yj = cj + alpha * zj;
                }
                n
            }
        }
    }

    /// Per-coordinate decomposition for separable references (euclidean,
    /// exp, sym_logistic, and products thereof). Tilted references are not
    /// separable coordinatewise and report `Unsupported`.
    pub(crate) fn scalar_components(&self) -> Result<Vec<ScalarComponent>> {
        self.scalar_components_scaled(1.0)
    }

    fn scalar_components_scaled(&self, outer: f64) -> Result<Vec<ScalarComponent>> {
        match self {
            ReferenceFunction::Euclidean { weights } => Ok(weights
                .iter()
                .map(|w| ScalarComponent {
                    kind: ScalarKind::Euclid { weight: *w },
                    scale: outer,
                })
                .collect()),
            ReferenceFunction::Exp { dim } => Ok(vec![
                ScalarComponent {
                    kind: ScalarKind::Exp,
                    scale: outer,
                };
                *dim
            ]),
            ReferenceFunction::SymLogistic { dim } => Ok(vec![
                ScalarComponent {
                    kind: ScalarKind::SymLog,
                    scale: outer,
                };
                *dim
            ]),
            ReferenceFunction::Product { blocks } => {
                let mut out = Vec::with_capacity(self.dim());
                for b in blocks {
                    out.extend(b.reference.scalar_components_scaled(outer * b.scale)?);
                }
                Ok(out)
            }
            ReferenceFunction::TiltScale { .. } => Err(Error::Unsupported(
                "tilted/scaled references have no coordinatewise decomposition".into(),
            )),
        }
    }

    /// The epi-scaling `λ ⋆ φ` with `(λ ⋆ φ)(x) = λ·φ(x/λ)`.
    pub fn epi_scale(&self, lambda: f64) -> EpiScaled<'_> {
        EpiScaled {
            base: self,
            lambda,
        }
    }
}

/// Epi-scaled view `(λ ⋆ φ)(x) = λ·φ(x/λ)` of a reference function; its
/// conjugate is `λ·φ*` and its gradient map is `x ↦ ∇φ(x/λ)`.
#[derive(Debug, Clone, Copy)]
pub struct EpiScaled<'a> {
    base: &'a ReferenceFunction,
    lambda: f64,
}

impl EpiScaled<'_> {
    pub fn value(&self, x: &Array1<f64>) -> f64 {
        self.base.value(&(x / self.lambda)) * self.lambda
    }

    pub fn grad(&self, x: &Array1<f64>) -> Array1<f64> {
        self.base.grad(&(x / self.lambda))
    }

    pub fn conj_value(&self, y: &Array1<f64>) -> f64 {
        self.lambda * self.base.conj_value(y)
    }

    pub fn conj_grad(&self, y: &Array1<f64>) -> Result<Array1<f64>> {
        Ok(self.base.conj_grad(y)? * self.lambda)
    }
}

/// Draw `sample_count` standard-normal points and report the worst
/// `‖∇φ*(∇φ(x)) − x‖_∞` over the draws: a direct check that the gradient
/// maps are mutually inverse bijections.
pub fn legendre_roundtrip_check(
    phi: &ReferenceFunction,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut worst: f64 = 0.0;
    for _ in 0..sample_count {
        let x = Array1::from_iter((0..phi.dim()).map(|_| normal.sample(&mut rng)));
        let back = phi.conj_grad(&phi.grad(&x))?;
        for (bj, xj) in back.iter().zip(x.iter()) {
            worst = worst.max((bj - xj).abs());
        }
    }
    Ok(worst)
}
