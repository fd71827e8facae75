//! Batch experiment runner: builds problems from a config, fans solver runs
//! out over a bounded worker pool, and writes deterministic artifacts —
//! per-run trace CSVs, plot-data CSVs against a shared objective estimate,
//! and a machine-readable JSON summary.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use ndarray::Array1;
use rayon::prelude::*;
use serde::Serialize;

use anisoprox::{
    build_lifted_exp_lp, build_logistic, build_ot_dual, run_armijo_gd, run_euclidean_baseline,
    run_fixed, run_linesearch, IterateTrace, Penalty, Regularizer, SmoothObjective, SolveStatus,
    SolverConfig,
};

use crate::config::{ExperimentConfig, PenaltyKind, ProblemKind, SolverMode};
use crate::generate::{generate_exp_lp, generate_logistic, generate_ot};
use crate::libsvm::{parse_libsvm, scale_columns_to_unit};

/// Step floor handed to every backtracking search.
const LAMBDA_FLOOR: f64 = 1e-12;

/// Write through a sibling temp file and rename, so readers never observe a
/// partially written artifact.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut name = path
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".tmp");
    let tmp = path.with_file_name(name);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// One solver entry in a comparison set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverChoice {
    /// Anisotropic proximal gradient at a constant step.
    AnisoFixed,
    /// Anisotropic proximal gradient with backtracking from `lambda_max`.
    AnisoLinesearch,
    /// Backtracking that warm-starts each search at the last accepted step.
    AnisoWarm,
    /// Classical (Euclidean-metric) proximal gradient with backtracking.
    EuclidBaseline,
    /// Euclidean gradient descent with Armijo backtracking on a smooth
    /// reformulation of the problem.
    ArmijoGd,
}

impl SolverChoice {
    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::AnisoFixed => "aniso_fixed",
            SolverChoice::AnisoLinesearch => "aniso_linesearch",
            SolverChoice::AnisoWarm => "aniso_warm",
            SolverChoice::EuclidBaseline => "euclid_ls",
            SolverChoice::ArmijoGd => "armijo_gd",
        }
    }

    pub fn from_mode(mode: SolverMode) -> Self {
        match mode {
            SolverMode::Fixed => SolverChoice::AnisoFixed,
            SolverMode::Linesearch => SolverChoice::AnisoLinesearch,
            SolverMode::WarmStart => SolverChoice::AnisoWarm,
            SolverMode::Euclidean => SolverChoice::EuclidBaseline,
            SolverMode::Armijo => SolverChoice::ArmijoGd,
        }
    }
}

/// A fully assembled problem instance, ready for the solver drivers.
pub struct Problem {
    pub f: SmoothObjective,
    pub g: Regularizer,
    pub x0: Array1<f64>,
    /// Smooth single-objective reformulation for Armijo runs (the lifted
    /// LP collapses back to its original coordinates here), with its own
    /// starting point.
    pub armijo: Option<(SmoothObjective, Array1<f64>)>,
}

/// Build the composite problem a config describes, at one instance seed.
/// File-backed datasets ignore the seed; generated instances are a pure
/// function of `(kind, m, n, seed)`.
pub fn build_problem(cfg: &ExperimentConfig, seed: u64) -> Result<Problem> {
    match cfg.kind {
        ProblemKind::Logistic => {
            let (mut features, labels) = match &cfg.data {
                Some(path) => {
                    let file = fs::File::open(path)
                        .with_context(|| format!("opening dataset {}", path.display()))?;
                    let ds = parse_libsvm(BufReader::new(file))
                        .with_context(|| format!("parsing dataset {}", path.display()))?;
                    if ds.is_empty() {
                        return Err(anyhow!("dataset {} has no rows", path.display()));
                    }
                    ds.to_dense()
                }
                None => {
                    let data = generate_logistic(cfg.m, cfg.n, seed);
                    (data.features, data.labels)
                }
            };
            if cfg.scale {
                scale_columns_to_unit(&mut features);
            }
            let n = features.ncols();
            let penalty = match cfg.penalty {
                PenaltyKind::None => Penalty::None,
                PenaltyKind::L1 => Penalty::L1(cfg.nu),
                PenaltyKind::SquaredL2 => Penalty::SquaredL2(cfg.nu),
            };
            let (f, g) = build_logistic(features, labels, penalty)?;
            let armijo = if cfg.penalty == PenaltyKind::None {
                Some((f.clone(), Array1::zeros(n)))
            } else {
                None
            };
            Ok(Problem {
                x0: Array1::zeros(f.dim()),
                f,
                g,
                armijo,
            })
        }
        ProblemKind::ExpLp => {
            let mut data = generate_exp_lp(cfg.m, cfg.n, seed);
            data.sigma = cfg.sigma;
            let lifted =
                build_lifted_exp_lp(&data.a, data.b.clone(), &data.c, data.sigma, cfg.epsilon)?;
            let f = lifted.smooth_objective();
            let g = lifted.regularizer();
            let armijo = Some((lifted.smooth_total_objective(), Array1::zeros(cfg.n)));
            Ok(Problem {
                x0: Array1::zeros(f.dim()),
                f,
                g,
                armijo,
            })
        }
        ProblemKind::Ot => {
            let data = generate_ot(cfg.m, cfg.n, seed);
            let ot = build_ot_dual(data.cost, data.r, data.s, cfg.sigma)?;
            let (f, g) = ot.joint();
            Ok(Problem {
                x0: Array1::zeros(f.dim()),
                f,
                g,
                armijo: None,
            })
        }
    }
}

fn default_fixed_lambda(problem: &Problem, cfg: &ExperimentConfig) -> Result<f64, String> {
    if let Some(lambda) = cfg.lambda {
        return Ok(lambda);
    }
    match problem.f.smoothness() {
        Some(l) if l > 0.0 => Ok(1.0 / l),
        _ => Err("fixed mode needs solver.lambda or a declared smoothness constant".to_string()),
    }
}

fn default_start_lambda(problem: &Problem, cfg: &ExperimentConfig) -> f64 {
    if let Some(lambda_max) = cfg.lambda_max {
        return lambda_max;
    }
    match problem.f.smoothness() {
        Some(l) if l > 0.0 => 4.0 / l,
        _ => 1.0,
    }
}

/// Run one solver choice on a built problem. `Err` carries setup failures
/// (the run never started); runtime aborts come back inside the trace.
pub fn run_choice(
    problem: &Problem,
    choice: SolverChoice,
    cfg: &ExperimentConfig,
) -> Result<IterateTrace, String> {
    let finish = |sc: SolverConfig| sc.with_max_iter(cfg.max_iter).with_gap_tol(cfg.gap_tol);
    match choice {
        SolverChoice::AnisoFixed => {
            let lambda = default_fixed_lambda(problem, cfg)?;
            run_fixed(&problem.f, &problem.g, &finish(SolverConfig::fixed(lambda)), &problem.x0)
                .map_err(|e| e.to_string())
        }
        SolverChoice::AnisoLinesearch => {
            let start = default_start_lambda(problem, cfg);
            let sc = finish(SolverConfig::linesearch(start, cfg.alpha, LAMBDA_FLOOR));
            run_linesearch(&problem.f, &problem.g, &sc, &problem.x0).map_err(|e| e.to_string())
        }
        SolverChoice::AnisoWarm => {
            let start = default_start_lambda(problem, cfg);
            let sc = finish(SolverConfig::warm_start(start, cfg.alpha, LAMBDA_FLOOR));
            run_linesearch(&problem.f, &problem.g, &sc, &problem.x0).map_err(|e| e.to_string())
        }
        SolverChoice::EuclidBaseline => {
            let weights = Array1::from_elem(problem.f.dim(), 1.0);
            let start = cfg.lambda_max.unwrap_or(1.0);
            let sc = finish(SolverConfig::linesearch(start, cfg.alpha, LAMBDA_FLOOR));
            run_euclidean_baseline(&problem.f, &problem.g, &weights, &sc, &problem.x0)
                .map_err(|e| e.to_string())
        }
        SolverChoice::ArmijoGd => {
            let Some((smooth, x0)) = &problem.armijo else {
                return Err(
                    "no smooth reformulation for Armijo runs on this problem".to_string()
                );
            };
            let start = cfg.lambda_max.unwrap_or(1.0);
            let sc = finish(SolverConfig::linesearch(start, cfg.tau, LAMBDA_FLOOR));
            run_armijo_gd(smooth, &sc, x0).map_err(|e| e.to_string())
        }
    }
}

/// Solvers compared by `compare` for each problem family.
pub fn comparison_choices(cfg: &ExperimentConfig) -> Vec<SolverChoice> {
    match cfg.kind {
        ProblemKind::Logistic => {
            let mut set = vec![
                SolverChoice::AnisoFixed,
                SolverChoice::AnisoLinesearch,
                SolverChoice::AnisoWarm,
                SolverChoice::EuclidBaseline,
            ];
            if cfg.penalty == PenaltyKind::None {
                set.push(SolverChoice::ArmijoGd);
            }
            set
        }
        ProblemKind::ExpLp => vec![
            SolverChoice::AnisoWarm,
            SolverChoice::AnisoFixed,
            SolverChoice::ArmijoGd,
        ],
        ProblemKind::Ot => vec![SolverChoice::AnisoFixed, SolverChoice::AnisoWarm],
    }
}

/// Outcome row for the JSON summary.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub name: String,
    pub seed: u64,
    pub status: String,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub final_gap: Option<f64>,
    pub min_gap: Option<f64>,
    pub grad_evals: usize,
    pub f_evals: usize,
    pub backward_steps: usize,
    pub error: Option<String>,
}

pub struct ExperimentReport {
    pub outcomes: Vec<RunOutcome>,
    pub f_star_est: Option<f64>,
    pub files: Vec<PathBuf>,
}

fn status_string(status: &SolveStatus) -> String {
    match status {
        SolveStatus::GapConverged => "gap_converged".to_string(),
        SolveStatus::MaxIterations => "max_iterations".to_string(),
        SolveStatus::Failed(msg) => format!("failed: {msg}"),
    }
}

fn problem_echo(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "kind": cfg.kind.to_string(),
        "data": cfg.data.as_ref().map(|p| p.display().to_string()),
        "m": cfg.m,
        "n": cfg.n,
        "sigma": cfg.sigma,
        "epsilon": cfg.epsilon,
        "penalty": match cfg.penalty {
            PenaltyKind::None => "none",
            PenaltyKind::L1 => "l1",
            PenaltyKind::SquaredL2 => "sql2",
        },
        "nu": cfg.nu,
        "scale": cfg.scale,
    })
}

/// Run the solver the config's `solver.mode` names, once per seed.
pub fn run_single(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    execute(cfg, &[SolverChoice::from_mode(cfg.mode)])
}

/// Run the full comparison set for the config's problem family.
pub fn run_comparison(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    execute(cfg, &comparison_choices(cfg))
}

fn execute(cfg: &ExperimentConfig, choices: &[SolverChoice]) -> Result<ExperimentReport> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;

    // One problem instance per seed; a build failure poisons only that
    // seed's runs, never the batch.
    let built: Vec<(u64, Result<Problem, String>)> = cfg
        .seeds
        .iter()
        .map(|&seed| (seed, build_problem(cfg, seed).map_err(|e| e.to_string())))
        .collect();
    let specs: Vec<(usize, SolverChoice)> = (0..built.len())
        .flat_map(|bi| choices.iter().map(move |&c| (bi, c)))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<IterateTrace, String>> = pool.install(|| {
        specs
            .par_iter()
            .map(|&(bi, choice)| match &built[bi].1 {
                Ok(problem) => run_choice(problem, choice, cfg),
                Err(e) => Err(format!("problem build failed: {e}")),
            })
            .collect()
    });

    // Shared objective estimate: the smallest final value any run reached.
    let f_star_est = results
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .map(|t| t.final_objective())
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.min(v)))
        });

    let mut outcomes = Vec::with_capacity(specs.len());
    let mut files = Vec::new();
    for (&(bi, choice), result) in specs.iter().zip(results.iter()) {
        let seed = built[bi].0;
        let name = format!("{}_seed{}", choice.name(), seed);
        match result {
            Ok(trace) => {
                let trace_path = cfg.out_dir.join(format!("{name}_trace.csv"));
                write_atomic(&trace_path, trace.to_csv(cfg.timings).as_bytes())?;
                files.push(trace_path);
                if let Some(f_star) = f_star_est {
                    let mut plot = String::from("k,F_minus_Fstar\n");
                    for r in &trace.records {
                        plot.push_str(&format!("{},{:e}\n", r.k, r.objective - f_star));
                    }
                    let plot_path = cfg.out_dir.join(format!("plot_{name}.csv"));
                    write_atomic(&plot_path, plot.as_bytes())?;
                    files.push(plot_path);
                }
                let min_gap = trace
                    .records
                    .iter()
                    .map(|r| r.gap)
                    .fold(f64::INFINITY, f64::min);
                outcomes.push(RunOutcome {
                    name,
                    seed,
                    status: status_string(&trace.status),
                    iterations: trace.iterations(),
                    final_objective: Some(trace.final_objective()),
                    final_gap: Some(trace.final_gap()),
                    min_gap: min_gap.is_finite().then_some(min_gap),
                    grad_evals: trace.grad_evals(),
                    f_evals: trace.f_evals,
                    backward_steps: trace.backward_steps,
                    error: None,
                });
            }
            Err(message) => {
                outcomes.push(RunOutcome {
                    name,
                    seed,
                    status: "error".to_string(),
                    iterations: 0,
                    final_objective: None,
                    final_gap: None,
                    min_gap: None,
                    grad_evals: 0,
                    f_evals: 0,
                    backward_steps: 0,
                    error: Some(message.clone()),
                });
            }
        }
    }

    let summary = serde_json::json!({
        "problem": problem_echo(cfg),
        "f_star_est": f_star_est,
        "f_star_note": "smallest final objective across all runs in this batch; \
                        plot files chart F(x_k) minus this estimate",
        "runs": outcomes,
    });
    let summary_path = cfg.out_dir.join("summary.json");
    write_atomic(
        &summary_path,
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    files.push(summary_path);

    Ok(ExperimentReport {
        outcomes,
        f_star_est,
        files,
    })
}

/// One grid-search cell.
#[derive(Debug, Clone, Serialize)]
pub struct GridCell {
    pub alpha: f64,
    pub lambda_init: f64,
    pub status: String,
    pub iterations: usize,
    pub grad_evals: usize,
    pub final_objective: Option<f64>,
    pub error: Option<String>,
}

pub struct GridReport {
    pub cells: Vec<GridCell>,
    pub best_alpha: f64,
    pub best_lambda_init: f64,
    pub files: Vec<PathBuf>,
}

/// Grid search over `(alpha, lambda_init)` with the warm-start solver on
/// the first seed's instance. Cells are ranked by gradient-evaluation
/// count, gap-converged runs strictly ahead of the rest; ties break toward
/// the earlier cell in row-major (alpha-outer) order.
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridReport> {
    fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating output directory {}", cfg.out_dir.display()))?;
    let seed = cfg.seeds[0];
    let problem = build_problem(cfg, seed)?;

    let pairs: Vec<(f64, f64)> = cfg
        .alphas
        .iter()
        .flat_map(|&a| cfg.lambda_inits.iter().map(move |&l| (a, l)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .context("building worker pool")?;
    let results: Vec<Result<IterateTrace, String>> = pool.install(|| {
        pairs
            .par_iter()
            .map(|&(alpha, lambda_init)| {
                let sc = SolverConfig::warm_start(lambda_init, alpha, LAMBDA_FLOOR)
                    .with_max_iter(cfg.max_iter)
                    .with_gap_tol(cfg.gap_tol);
                run_linesearch(&problem.f, &problem.g, &sc, &problem.x0).map_err(|e| e.to_string())
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(pairs.len());
    for (&(alpha, lambda_init), result) in pairs.iter().zip(results.iter()) {
        match result {
            Ok(trace) => cells.push(GridCell {
                alpha,
                lambda_init,
                status: status_string(&trace.status),
                iterations: trace.iterations(),
                grad_evals: trace.grad_evals(),
                final_objective: Some(trace.final_objective()),
                error: None,
            }),
            Err(message) => cells.push(GridCell {
                alpha,
                lambda_init,
                status: "error".to_string(),
                iterations: 0,
                grad_evals: usize::MAX,
                final_objective: None,
                error: Some(message.clone()),
            }),
        }
    }

    let best_index = (0..cells.len())
        .min_by_key(|&i| {
            let converged = cells[i].status == "gap_converged";
            (if converged { 0usize } else { 1 }, cells[i].grad_evals, i)
        })
        .expect("grids are validated nonempty");

    let mut grid_csv = String::from("alpha,lambda_init,status,iterations,grad_evals,final_F\n");
    for cell in &cells {
        grid_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            cell.alpha,
            cell.lambda_init,
            cell.status,
            cell.iterations,
            if cell.grad_evals == usize::MAX {
                "-".to_string()
            } else {
                cell.grad_evals.to_string()
            },
            cell.final_objective
                .map(|v| format!("{v:e}"))
                .unwrap_or_else(|| "-".to_string()),
        ));
    }
    let grid_path = cfg.out_dir.join("grid.csv");
    write_atomic(&grid_path, grid_csv.as_bytes())?;

    let summary = serde_json::json!({
        "problem": problem_echo(cfg),
        "seed": seed,
        "selection": "fewest gradient evaluations, gap-converged runs first",
        "best_alpha": cells[best_index].alpha,
        "best_lambda_init": cells[best_index].lambda_init,
        "cells": cells,
    });
    let summary_path = cfg.out_dir.join("bench_summary.json");
    write_atomic(
        &summary_path,
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;

    Ok(GridReport {
        best_alpha: cells[best_index].alpha,
        best_lambda_init: cells[best_index].lambda_init,
        cells,
        files: vec![grid_path, summary_path],
    })
}
