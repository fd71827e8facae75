//! Command-line harness for the anisotropic proximal gradient library:
//! single runs, solver comparisons, step-size grid searches, invariant
//! check suites, and synthetic instance generation.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use ndarray::Array2;

use anisoprox_cli::checks::run_suites;
use anisoprox_cli::config::{ExperimentConfig, CONFIG_KEY_HELP};
use anisoprox_cli::experiment::{
    run_comparison, run_grid, run_single, write_atomic, ExperimentReport,
};
use anisoprox_cli::generate::{generate_exp_lp, generate_logistic, generate_ot};

#[derive(Parser)]
#[command(
    name = "anisoprox",
    about = "Anisotropic proximal gradient solvers, benchmarks, and checks",
    after_long_help = CONFIG_KEY_HELP
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver named by the config, once per seed.
    #[command(after_long_help = CONFIG_KEY_HELP)]
    Solve {
        /// Experiment configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Grid-search backtracking parameters (alpha × lambda_init) with the
    /// warm-start solver; the winner uses the fewest gradient evaluations.
    #[command(after_long_help = CONFIG_KEY_HELP)]
    Bench {
        /// Experiment configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the full solver comparison set for the configured problem.
    #[command(after_long_help = CONFIG_KEY_HELP)]
    Compare {
        /// Experiment configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run invariant check suites and print one pass/fail row per suite.
    Check {
        /// Suite name, a comma-separated list, or `all`: legendre,
        /// bregman, moreau, descent, sinkhorn, sufficient-decrease.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Seed for the suites' deterministic sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Multiplier applied to declared smoothness constants in the
        /// descent suite; 0.5 must make that suite fail.
        #[arg(long, default_value_t = 1.0)]
        l_scale: f64,
    },
    /// Generate a synthetic instance and write it to a file.
    Gen {
        /// Instance family: logistic (sparse text), exp_lp or ot (JSON).
        #[arg(long)]
        kind: String,
        /// Rows (samples / constraints / transport rows).
        #[arg(long, default_value_t = 100)]
        m: usize,
        /// Columns (features / variables / transport columns).
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Generator seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Destination file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    if let Some(workers) = workers {
        if workers == 0 {
            return Err(anyhow!("--workers must be at least 1"));
        }
        cfg.workers = workers;
    }
    Ok(cfg)
}

fn print_report(report: &ExperimentReport, out_dir: &Path) {
    for outcome in &report.outcomes {
        let objective = outcome
            .final_objective
            .map(|v| format!("{v:.9e}"))
            .unwrap_or_else(|| "-".to_string());
        let gap = outcome
            .final_gap
            .map(|v| format!("{v:.3e}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "run={} status={} iters={} F={} gap={} grad_evals={}",
            outcome.name, outcome.status, outcome.iterations, objective, gap, outcome.grad_evals
        );
        if let Some(error) = &outcome.error {
            println!("  error: {error}");
        }
    }
    if let Some(f_star) = report.f_star_est {
        println!("f_star_est={f_star:e}");
    }
    println!(
        "wrote {} artifact file(s) to {}",
        report.files.len(),
        out_dir.display()
    );
}

fn rows_of(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|row| row.to_vec()).collect()
}

fn run_gen(kind: &str, m: usize, n: usize, seed: u64, out: &Path) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(anyhow!("--m and --n must be positive"));
    }
    let bytes: Vec<u8> = match kind {
        "logistic" => generate_logistic(m, n, seed).to_libsvm().into_bytes(),
        "exp_lp" => {
            let data = generate_exp_lp(m, n, seed);
            let value = serde_json::json!({
                "a": rows_of(&data.a),
                "b": data.b.to_vec(),
                "c": data.c.to_vec(),
                "sigma": data.sigma,
            });
            (serde_json::to_string_pretty(&value)? + "\n").into_bytes()
        }
        "ot" => {
            let data = generate_ot(m, n, seed);
            let value = serde_json::json!({
                "cost": rows_of(&data.cost),
                "r": data.r.to_vec(),
                "s": data.s.to_vec(),
            });
            (serde_json::to_string_pretty(&value)? + "\n").into_bytes()
        }
        other => {
            return Err(anyhow!(
                "unknown kind `{other}`; expected logistic, exp_lp, or ot"
            ))
        }
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("creating directory {}", parent.display()))?;
    }
    write_atomic(out, &bytes).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {kind} instance (m={m}, n={n}, seed={seed}) to {}", out.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve {
            config,
            out,
            seed,
            workers,
        } => {
            let cfg = load_config(&config, out, seed, workers)?;
            let report = run_single(&cfg)?;
            print_report(&report, &cfg.out_dir);
        }
        Command::Compare {
            config,
            out,
            seed,
            workers,
        } => {
            let cfg = load_config(&config, out, seed, workers)?;
            let report = run_comparison(&cfg)?;
            print_report(&report, &cfg.out_dir);
        }
        Command::Bench {
            config,
            out,
            seed,
            workers,
        } => {
            let cfg = load_config(&config, out, seed, workers)?;
            let report = run_grid(&cfg)?;
            for cell in &report.cells {
                let objective = cell
                    .final_objective
                    .map(|v| format!("{v:.9e}"))
                    .unwrap_or_else(|| "-".to_string());
                println!(
                    "cell alpha={} lambda_init={} status={} grad_evals={} F={}",
                    cell.alpha,
                    cell.lambda_init,
                    cell.status,
                    if cell.grad_evals == usize::MAX {
                        "-".to_string()
                    } else {
                        cell.grad_evals.to_string()
                    },
                    objective
                );
            }
            println!(
                "best: alpha={} lambda_init={}",
                report.best_alpha, report.best_lambda_init
            );
            println!(
                "wrote {} artifact file(s) to {}",
                report.files.len(),
                cfg.out_dir.display()
            );
        }
        Command::Check {
            suite,
            seed,
            l_scale,
        } => {
            let results = run_suites(&suite, seed, l_scale)?;
            let mut failed = 0usize;
            for result in &results {
                println!("{}", result.row());
                if !result.pass {
                    failed += 1;
                }
            }
            if failed > 0 {
                // An expected outcome, not a program error: report and
                // exit nonzero without an error trace.
                eprintln!("{failed} of {} suites failed", results.len());
                std::process::exit(1);
            }
        }
        Command::Gen {
            kind,
            m,
            n,
            seed,
            out,
        } => run_gen(&kind, m, n, seed, &out)?,
    }
    Ok(())
}
