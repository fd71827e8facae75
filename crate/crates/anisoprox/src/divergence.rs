//! Bregman distances induced by a reference function and its conjugate.
//!
//! The dual-space distance `D_{φ*}(x, y) = φ*(x) − φ*(y) − ⟨∇φ*(y), x − y⟩`
//! measures gradient discrepancies; for the `exp` reference it reduces to
//! the Kullback–Leibler divergence. Because `dom φ*` can be a strict subset
//! of `ℝⁿ`, the distance is extended-real-valued and is carried here as an
//! explicit finite/infinite tag rather than a large float.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::reference::ReferenceFunction;

/// An extended-real divergence value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BregmanValue {
    Finite(f64),
    Infinite,
}

impl BregmanValue {
    pub fn is_finite(self) -> bool {
        matches!(self, BregmanValue::Finite(_))
    }

    /// The finite value, if any.
    pub fn finite(self) -> Option<f64> {
        match self {
            BregmanValue::Finite(v) => Some(v),
            BregmanValue::Infinite => None,
        }
    }

    /// Collapse to `f64`, mapping the infinite tag to `f64::INFINITY`.
    pub fn as_f64(self) -> f64 {
        match self {
            BregmanValue::Finite(v) => v,
            BregmanValue::Infinite => f64::INFINITY,
        }
    }
}

fn inner(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Dual-space Bregman distance `D_{φ*}(x, y)`.
///
/// Finite when `x ∈ dom φ*` and `y ∈ int dom φ*`; the infinite tag is
/// returned when `φ*(x) = +∞` or `∇φ*(y)` is undefined.
pub fn bregman_dual(phi: &ReferenceFunction, x: &Array1<f64>, y: &Array1<f64>) -> BregmanValue {
    let fx = phi.conj_value(x);
    if !fx.is_finite() {
        return BregmanValue::Infinite;
    }
    let grad_y = match phi.conj_grad(y) {
        Ok(g) => g,
        Err(_) => return BregmanValue::Infinite,
    };
    let fy = phi.conj_value(y);
    let diff = x - y;
    BregmanValue::Finite(fx - fy - inner(&grad_y, &diff))
}

/// Primal-space Bregman distance `D_φ(u, v) = φ(u) − φ(v) − ⟨∇φ(v), u−v⟩`,
/// always finite for the shipped full-domain families.
pub fn bregman_primal(phi: &ReferenceFunction, u: &Array1<f64>, v: &Array1<f64>) -> f64 {
    let diff = u - v;
    phi.value(u) - phi.value(v) - inner(&phi.grad(v), &diff)
}

/// Residual of the primal/dual identity
/// `D_{φ*}(x, y) = D_φ(∇φ*(y), ∇φ*(x))`.
///
/// Both arguments must lie in the interior of `dom φ*`; the conjugate-domain
/// error of `∇φ*` is propagated otherwise.
pub fn dual_identity_residual(
    phi: &ReferenceFunction,
    x: &Array1<f64>,
    y: &Array1<f64>,
) -> Result<f64> {
    let gx = phi.conj_grad(x)?;
    let gy = phi.conj_grad(y)?;
    let dual = match bregman_dual(phi, x, y) {
        BregmanValue::Finite(v) => v,
        BregmanValue::Infinite => {
            return Err(Error::Numeric(
                "dual Bregman distance infinite on interior points".into(),
            ))
        }
    };
    let primal = bregman_primal(phi, &gy, &gx);
    Ok((dual - primal).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {a} and {b} to agree within {tol}"
        );
    }

    /// Independent Kullback–Leibler oracle for positive vectors.
    fn kl(x: &Array1<f64>, y: &Array1<f64>) -> f64 {
        x.iter()
            .zip(y.iter())
            .map(|(xj, yj)| xj * (xj / yj).ln() - xj + yj)
            .sum()
    }

    #[test]
    fn dual_distance_under_exp_is_kullback_leibler() {
        let phi = ReferenceFunction::exp(1).unwrap();
        let d = bregman_dual(&phi, &array![1.0], &array![2.0]);
        // 1·ln(1/2) − 1 + 2 = 1 − ln 2.
        assert_close(d.finite().unwrap(), 1.0 - std::f64::consts::LN_2, 1e-14);

        let phi3 = ReferenceFunction::exp(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let x = Array1::from_iter((0..3).map(|_| rng.random_range(0.05..4.0)));
            let y = Array1::from_iter((0..3).map(|_| rng.random_range(0.05..4.0)));
            let d = bregman_dual(&phi3, &x, &y).finite().unwrap();
            assert_close(d, kl(&x, &y), 1e-12);
        }
    }

    #[test]
    fn primal_distance_under_exp() {
        let phi = ReferenceFunction::exp(1).unwrap();
        // D_φ(1, 0) = e − 1 − 1·(1 − 0) = e − 2.
        let d = bregman_primal(&phi, &array![1.0], &array![0.0]);
        assert_close(d, std::f64::consts::E - 2.0, 1e-14);
    }

    #[test]
    fn distances_vanish_only_on_the_diagonal() {
        let refs = [
            ReferenceFunction::euclidean(array![1.0, 2.0]).unwrap(),
            ReferenceFunction::exp(2).unwrap(),
            ReferenceFunction::sym_logistic(2).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for phi in &refs {
            for _ in 0..100 {
                // Interior dual points for every family: ∇φ of a random x.
                let x = Array1::from_iter((0..2).map(|_| rng.random_range(-2.0..2.0)));
                let y = Array1::from_iter((0..2).map(|_| rng.random_range(-2.0..2.0)));
                let (dx, dy) = (phi.grad(&x), phi.grad(&y));
                let d = bregman_dual(phi, &dx, &dy).finite().unwrap();
                assert!(d >= -1e-13, "negative Bregman distance {d}");
                let same = bregman_dual(phi, &dx, &dx).finite().unwrap();
                assert_close(same, 0.0, 1e-13);
                if (&dx - &dy).iter().any(|t| t.abs() > 1e-3) {
                    assert!(d > 0.0, "distance vanished off the diagonal");
                }
            }
        }
    }

    #[test]
    fn infinite_tag_outside_the_conjugate_domain() {
        let phi = ReferenceFunction::exp(1).unwrap();
        // x outside dom φ*.
        assert_eq!(
            bregman_dual(&phi, &array![-1.0], &array![1.0]),
            BregmanValue::Infinite
        );
        // y on the boundary: ∇φ* undefined.
        assert_eq!(
            bregman_dual(&phi, &array![1.0], &array![0.0]),
            BregmanValue::Infinite
        );
        // x on the boundary is fine (0·ln 0 = 0): D(0, y) = y.
        let d = bregman_dual(&phi, &array![0.0], &array![0.7]);
        assert_close(d.finite().unwrap(), 0.7, 1e-15);
    }

    #[test]
    fn dual_identity_holds_on_interior_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let exp = ReferenceFunction::exp(4).unwrap();
        let sym = ReferenceFunction::sym_logistic(4).unwrap();
        for _ in 0..200 {
            let x = Array1::from_iter((0..4).map(|_| rng.random_range(0.05..3.0)));
            let y = Array1::from_iter((0..4).map(|_| rng.random_range(0.05..3.0)));
            assert!(dual_identity_residual(&exp, &x, &y).unwrap() <= 1e-9);
            let xs = x.mapv(|t| (t - 1.5) / 1.6);
            let ys = y.mapv(|t| (t - 1.5) / 1.6);
            assert!(dual_identity_residual(&sym, &xs, &ys).unwrap() <= 1e-9);
        }
    }

    #[test]
    fn dual_identity_rejects_boundary_arguments() {
        let phi = ReferenceFunction::exp(1).unwrap();
        assert!(dual_identity_residual(&phi, &array![0.0], &array![1.0]).is_err());
    }
}
