//! Self-contained invariant suites runnable from the command line. Each
//! suite samples deterministically from a seed, reports its worst residual
//! against a pinned threshold, and prints one machine-readable row.

use anyhow::{anyhow, Result};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use anisoprox::prox::moreau_decomposition_residual;
use anisoprox::{
    build_exp_lp, build_logistic, build_ot_dual, descent_inequality_sampler,
    dual_identity_residual, legendre_roundtrip_check, run_fixed, Penalty, ReferenceFunction,
    Regularizer, SolverConfig,
};

use crate::generate::{generate_exp_lp, generate_logistic, generate_ot};

/// Result of one suite: the worst residual observed and whether it stayed
/// at or below the suite threshold.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: &'static str,
    pub pass: bool,
    pub worst: f64,
    pub threshold: f64,
    pub detail: String,
}

impl SuiteResult {
    fn from_worst(name: &'static str, worst: f64, threshold: f64, detail: String) -> Self {
        SuiteResult {
            name,
            pass: worst.is_finite() && worst <= threshold,
            worst,
            threshold,
            detail,
        }
    }

    /// One machine-readable row per suite.
    pub fn row(&self) -> String {
        format!(
            "suite={} pass={} worst={:e} threshold={:e} {}",
            self.name, self.pass, self.worst, self.threshold, self.detail
        )
    }
}

pub const SUITE_NAMES: [&str; 6] = [
    "legendre",
    "bregman",
    "moreau",
    "descent",
    "sinkhorn",
    "sufficient-decrease",
];

/// Run the selected suites (`"all"` or a comma-separated subset of
/// [`SUITE_NAMES`]). `l_scale` multiplies every declared smoothness
/// constant in the descent suite, so `--l-scale 0.5` must make that suite
/// fail — a mutation check that the sampler has teeth.
pub fn run_suites(selector: &str, seed: u64, l_scale: f64) -> Result<Vec<SuiteResult>> {
    let selected: Vec<&str> = if selector == "all" {
        SUITE_NAMES.to_vec()
    } else {
        let requested: Vec<&str> = selector.split(',').map(str::trim).collect();
        for name in &requested {
            if !SUITE_NAMES.contains(name) {
                return Err(anyhow!(
                    "unknown suite `{name}`; expected one of {}",
                    SUITE_NAMES.join(", ")
                ));
            }
        }
        requested
    };
    if !(l_scale > 0.0 && l_scale.is_finite()) {
        return Err(anyhow!("l-scale must be positive and finite"));
    }

    let mut results = Vec::with_capacity(selected.len());
    for name in selected {
        let result = match name {
            "legendre" => legendre_suite(seed)?,
            "bregman" => bregman_suite(seed)?,
            "moreau" => moreau_suite(seed)?,
            "descent" => descent_suite(seed, l_scale)?,
            "sinkhorn" => sinkhorn_suite(seed)?,
            "sufficient-decrease" => sufficient_decrease_suite(seed)?,
            _ => unreachable!("selector validated above"),
        };
        results.push(result);
    }
    Ok(results)
}

/// `∇φ* ∘ ∇φ = id` across every reference family, including products and
/// tilt-scaled variants.
fn legendre_suite(seed: u64) -> Result<SuiteResult> {
    let mut references = vec![
        ReferenceFunction::euclidean_unit(6)?,
        ReferenceFunction::euclidean(Array1::from_vec(vec![0.5, 1.0, 2.5, 4.0]))?,
        ReferenceFunction::exp(5)?,
        ReferenceFunction::sym_logistic(4)?,
    ];
    references.push(ReferenceFunction::product(vec![
        (ReferenceFunction::euclidean_unit(2)?, 1.5),
        (ReferenceFunction::exp(2)?, 0.75),
    ])?);
    references.push(ReferenceFunction::tilt_scale(
        ReferenceFunction::sym_logistic(3)?,
        1.3,
        Array1::from_elem(3, 0.2),
    )?);

    let mut worst: f64 = 0.0;
    for (i, phi) in references.iter().enumerate() {
        worst = worst.max(legendre_roundtrip_check(phi, 200, seed + i as u64)?);
    }
    Ok(SuiteResult::from_worst(
        "legendre",
        worst,
        1e-9,
        format!("references={} samples_each=200", references.len()),
    ))
}

/// The dual Bregman identity `D_φ*(x, y) = D_φ(∇φ*(y), ∇φ*(x))` on random
/// interior dual pairs for the exp and symmetrized-logistic references.
fn bregman_suite(seed: u64) -> Result<SuiteResult> {
    let dim = 3;
    let exp = ReferenceFunction::exp(dim)?;
    let symlog = ReferenceFunction::sym_logistic(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let pairs = 1000;
    let mut draw = |interior: &dyn Fn(f64) -> f64| -> Array1<f64> {
        Array1::from_iter((0..dim).map(|_| {
            let t: f64 = StandardNormal.sample(&mut rng);
            interior(t)
        }))
    };
    for _ in 0..pairs {
        // exp conjugate domain: strictly positive points.
        let x = draw(&|t| t.exp());
        let y = draw(&|t| t.exp());
        worst = worst.max(dual_identity_residual(&exp, &x, &y)?);
        // sym-logistic conjugate domain: the open box (−1, 1).
        let x = draw(&|t| 0.999 * t.tanh());
        let y = draw(&|t| 0.999 * t.tanh());
        worst = worst.max(dual_identity_residual(&symlog, &x, &y)?);
    }
    Ok(SuiteResult::from_worst(
        "bregman",
        worst,
        1e-9,
        format!("pairs={pairs} families=exp,sym_logistic"),
    ))
}

/// The anisotropic Moreau decomposition for the l1/sym-logistic pair on
/// random instances. Inputs stay in the window `|y|/(2λ) ≤ 7` where the
/// tanh/atanh round trip is well conditioned.
fn moreau_suite(seed: u64) -> Result<SuiteResult> {
    let dim = 6;
    let phi = ReferenceFunction::sym_logistic(dim)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let instances = 500;
    for _ in 0..instances {
        let nu = rng.random_range(0.1..2.0);
        let lambda = rng.random_range(0.5..4.0);
        let y = Array1::from_iter((0..dim).map(|_| rng.random_range(-7.0..7.0)));
        let g = Regularizer::l1(nu, dim)?;
        worst = worst.max(moreau_decomposition_residual(&g, &phi, lambda, &y)?);
    }
    Ok(SuiteResult::from_worst(
        "moreau",
        worst,
        1e-8,
        format!("instances={instances}"),
    ))
}

/// The anisotropic descent inequality at the declared smoothness constants
/// for the logistic and exponential-sum models. `l_scale` rebinds each
/// objective with a scaled constant before sampling.
fn descent_suite(seed: u64, l_scale: f64) -> Result<SuiteResult> {
    let pairs = 2000;
    let mut worst = f64::NEG_INFINITY;
    let mut evaluated = 0usize;

    let data = generate_logistic(40, 6, seed);
    let (f, _) = build_logistic(data.features, data.labels, Penalty::None)?;
    let l = f.smoothness().expect("logistic declares its constant");
    let f = f.with_reference(f.reference().clone(), Some(l * l_scale))?;
    let report = descent_inequality_sampler(&f, pairs, seed)?;
    worst = worst.max(report.worst_violation);
    evaluated += report.evaluated;

    // The exponential-sum constant is tight (equality holds in the limit),
    // so an understated constant is caught here even when the conservative
    // logistic bound hides it.
    let data = generate_exp_lp(6, 4, seed);
    let (f, _) = build_exp_lp(data.a.mapv(f64::abs), data.b, data.c, 1.0)?;
    let l = f.smoothness().expect("the exp sum declares its constant");
    let f = f.with_reference(f.reference().clone(), Some(l * l_scale))?;
    let report = descent_inequality_sampler(&f, pairs, seed)?;
    worst = worst.max(report.worst_violation);
    evaluated += report.evaluated;

    Ok(SuiteResult::from_worst(
        "descent",
        worst,
        1e-8,
        format!("pairs_evaluated={evaluated} l_scale={l_scale}"),
    ))
}

/// Matrix-scaling Sinkhorn on the Gibbs kernel, used as an independent
/// oracle for the Gauss–Seidel sweeps of the transport dual.
struct SinkhornOracle {
    kernel: Array2<f64>,
    r: Array1<f64>,
    s: Array1<f64>,
    u: Array1<f64>,
    v: Array1<f64>,
    sigma: f64,
}

impl SinkhornOracle {
    fn new(cost: &Array2<f64>, r: &Array1<f64>, s: &Array1<f64>, sigma: f64) -> Self {
        SinkhornOracle {
            kernel: cost.mapv(|c| (-c / sigma).exp()),
            r: r.clone(),
            s: s.clone(),
            u: Array1::from_elem(r.len(), 1.0),
            v: Array1::from_elem(s.len(), 1.0),
            sigma,
        }
    }

    /// One column-then-row scaling pass: `u ← r ./ Kᵀv`, then `v ← s ./ Ku`.
    fn sweep(&mut self) {
        let (m, n) = self.kernel.dim();
        for j in 0..n {
            let mut total = 0.0;
            for i in 0..m {
                total += self.kernel[(i, j)] * self.v[i];
            }
            self.u[j] = self.r[j] / total;
        }
        for i in 0..m {
            let mut total = 0.0;
            for j in 0..n {
                total += self.kernel[(i, j)] * self.u[j];
            }
            self.v[i] = self.s[i] / total;
        }
    }

    /// Dual potentials corresponding to the current scalings.
    fn potentials(&self) -> (Array1<f64>, Array1<f64>) {
        (
            self.u.mapv(|t| self.sigma * t.ln()),
            self.v.mapv(|t| self.sigma * t.ln()),
        )
    }
}

/// Per-iterate agreement between the Gauss–Seidel dual sweeps and the
/// independent matrix-scaling oracle, over several random instances.
fn sinkhorn_suite(seed: u64) -> Result<SuiteResult> {
    let sigma = 0.1;
    let sweeps = 100;
    let mut worst: f64 = 0.0;
    for offset in 0..5u64 {
        let data = generate_ot(5, 5, seed + offset);
        let ot = build_ot_dual(data.cost.clone(), data.r.clone(), data.s.clone(), sigma)?;
        let mut oracle = SinkhornOracle::new(&data.cost, &data.r, &data.s, sigma);
        let mut alpha = Array1::zeros(5);
        let mut beta = Array1::zeros(5);
        for _ in 0..sweeps {
            let (next_alpha, next_beta) = ot.gauss_seidel_sweep(&alpha, &beta)?;
            oracle.sweep();
            let (oracle_alpha, oracle_beta) = oracle.potentials();
            for (a, b) in next_alpha.iter().zip(oracle_alpha.iter()) {
                worst = worst.max((a - b).abs());
            }
            for (a, b) in next_beta.iter().zip(oracle_beta.iter()) {
                worst = worst.max((a - b).abs());
            }
            alpha = next_alpha;
            beta = next_beta;
        }
    }
    Ok(SuiteResult::from_worst(
        "sinkhorn",
        worst,
        1e-8,
        format!("instances=5 sweeps={sweeps}"),
    ))
}

/// Every fixed-step iteration must satisfy
/// `F(xᵏ⁺¹) ≤ F(xᵏ) − λ·gap(xᵏ, λ)` up to relative slack.
fn sufficient_decrease_suite(seed: u64) -> Result<SuiteResult> {
    let mut worst = f64::NEG_INFINITY;
    let mut iterations = 0usize;

    let mut check_trace = |trace: &anisoprox::IterateTrace| {
        for pair in trace.records.windows(2) {
            let violation = (pair[1].objective - pair[0].objective + pair[0].lambda * pair[0].gap)
                / (1.0 + pair[0].objective.abs());
            worst = worst.max(violation);
            iterations += 1;
        }
    };

    let data = generate_logistic(40, 6, seed);
    let (f, g) = build_logistic(data.features, data.labels, Penalty::L1(0.05))?;
    let lambda = 1.0 / f.smoothness().expect("logistic declares its constant");
    let sc = SolverConfig::fixed(lambda)
        .with_max_iter(300)
        .with_gap_tol(-1.0);
    let trace = run_fixed(&f, &g, &sc, &Array1::zeros(f.dim()))?;
    check_trace(&trace);

    let data = generate_ot(5, 5, seed);
    let ot = build_ot_dual(data.cost, data.r, data.s, 0.1)?;
    let (f, g) = ot.joint();
    let lambda = 1.0 / f.smoothness().expect("the transport dual declares its constant");
    let sc = SolverConfig::fixed(lambda)
        .with_max_iter(300)
        .with_gap_tol(-1.0);
    let trace = run_fixed(&f, &g, &sc, &Array1::zeros(f.dim()))?;
    check_trace(&trace);

    Ok(SuiteResult::from_worst(
        "sufficient-decrease",
        worst,
        1e-10,
        format!("iterations_checked={iterations}"),
    ))
}
