//! Plain-text experiment configuration: `key = value` lines grouped under
//! `[section]` headers, with `#` comments. Every key is documented in the
//! CLI long help (`anisoprox solve --help`).

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(message.into())
}

/// Raw parsed document: sections in file order, each a list of
/// `(key, value, line)` entries.
#[derive(Debug, Default)]
pub struct ConfigDoc {
    sections: Vec<(String, Vec<(String, String, usize)>)>,
}

impl ConfigDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut doc = ConfigDoc::default();
        let mut current: Option<usize> = None;
        for (line_index, raw) in text.lines().enumerate() {
            let line_no = line_index + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            if let Some(name) = content.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return Err(ConfigError::Parse {
                        line: line_no,
                        message: format!("unterminated section header `{content}`"),
                    });
                };
                doc.sections.push((name.trim().to_string(), Vec::new()));
                current = Some(doc.sections.len() - 1);
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: format!("expected `key = value`, got `{content}`"),
                });
            };
            let Some(section) = current else {
                return Err(ConfigError::Parse {
                    line: line_no,
                    message: "key outside of any [section]".to_string(),
                });
            };
            doc.sections[section].1.push((
                key.trim().to_string(),
                value.trim().to_string(),
                line_no,
            ));
        }
        Ok(doc)
    }

    fn get(&self, section: &str, key: &str) -> Option<(&str, usize)> {
        self.sections
            .iter()
            .filter(|(name, _)| name == section)
            .flat_map(|(_, entries)| entries.iter())
            .find(|(k, _, _)| k == key)
            .map(|(_, v, line)| (v.as_str(), *line))
    }

    /// Flag keys that are not in the allowed set for their section —
    /// catches typos instead of silently using a default.
    fn check_known(&self, allowed: &[(&str, &[&str])]) -> Result<(), ConfigError> {
        for (name, entries) in &self.sections {
            let Some((_, keys)) = allowed.iter().find(|(s, _)| s == name) else {
                return Err(invalid(format!("unknown section [{name}]")));
            };
            let known: BTreeSet<&str> = keys.iter().copied().collect();
            let mut seen: BTreeSet<&str> = BTreeSet::new();
            for (key, _, line) in entries {
                if !known.contains(key.as_str()) {
                    return Err(ConfigError::Parse {
                        line: *line,
                        message: format!("unknown key `{key}` in [{name}]"),
                    });
                }
                if !seen.insert(key.as_str()) {
                    return Err(ConfigError::Parse {
                        line: *line,
                        message: format!("duplicate key `{key}` in [{name}]"),
                    });
                }
            }
        }
        Ok(())
    }
}

fn parse_typed<T: std::str::FromStr>(
    doc: &ConfigDoc,
    section: &str,
    key: &str,
) -> Result<Option<T>, ConfigError> {
    match doc.get(section, key) {
        None => Ok(None),
        Some((text, line)) => text.parse::<T>().map(Some).map_err(|_| ConfigError::Parse {
            line,
            message: format!("could not parse `{text}` for {section}.{key}"),
        }),
    }
}

fn parse_list_f64(doc: &ConfigDoc, section: &str, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
    match doc.get(section, key) {
        None => Ok(None),
        Some((text, line)) => text
            .split(',')
            .map(|piece| {
                piece.trim().parse::<f64>().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("could not parse `{}` in {section}.{key}", piece.trim()),
                })
            })
            .collect::<Result<Vec<f64>, _>>()
            .map(Some),
    }
}

fn parse_list_u64(doc: &ConfigDoc, section: &str, key: &str) -> Result<Option<Vec<u64>>, ConfigError> {
    match doc.get(section, key) {
        None => Ok(None),
        Some((text, line)) => text
            .split(',')
            .map(|piece| {
                piece.trim().parse::<u64>().map_err(|_| ConfigError::Parse {
                    line,
                    message: format!("could not parse `{}` in {section}.{key}", piece.trim()),
                })
            })
            .collect::<Result<Vec<u64>, _>>()
            .map(Some),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Logistic,
    ExpLp,
    Ot,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemKind::Logistic => write!(f, "logistic"),
            ProblemKind::ExpLp => write!(f, "exp_lp"),
            ProblemKind::Ot => write!(f, "ot"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyKind {
    None,
    L1,
    SquaredL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMode {
    Fixed,
    Linesearch,
    WarmStart,
    Euclidean,
    Armijo,
}

impl fmt::Display for SolverMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverMode::Fixed => write!(f, "fixed"),
            SolverMode::Linesearch => write!(f, "linesearch"),
            SolverMode::WarmStart => write!(f, "warm_start"),
            SolverMode::Euclidean => write!(f, "euclidean"),
            SolverMode::Armijo => write!(f, "armijo"),
        }
    }
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ProblemKind,
    pub data: Option<PathBuf>,
    pub m: usize,
    pub n: usize,
    pub problem_seed: u64,
    pub sigma: f64,
    pub epsilon: f64,
    pub penalty: PenaltyKind,
    pub nu: f64,
    pub scale: bool,

    pub mode: SolverMode,
    pub lambda: Option<f64>,
    pub lambda_max: Option<f64>,
    pub alpha: f64,
    pub tau: f64,
    pub max_iter: usize,
    pub gap_tol: f64,

    pub alphas: Vec<f64>,
    pub lambda_inits: Vec<f64>,

    pub seeds: Vec<u64>,
    pub workers: usize,
    pub timings: bool,
    pub out_dir: PathBuf,
}

pub const DEFAULT_ALPHAS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
pub const DEFAULT_LAMBDA_INITS: [f64; 4] = [1.0, 5.0, 10.0, 15.0];

/// Reference for every accepted configuration key, shown by `--help`.
pub const CONFIG_KEY_HELP: &str = "\
Configuration files are plain text: `key = value` lines grouped under
`[section]` headers; `#` starts a comment.

[problem]
  kind     = logistic | exp_lp | ot   (required)
  data     = PATH    sparse `label idx:val …` dataset (logistic only;
                     without it the instance is generated)
  m        = INT     generated rows (default 100)
  n        = INT     generated columns (default 10)
  seed     = INT     instance seed when [run] seeds is absent (default 0)
  sigma    = FLOAT   sharpness for exp_lp / ot (default 0.001)
  epsilon  = FLOAT   two-sided lifting shift for exp_lp (default 0)
  penalty  = none | l1 | sql2   logistic regularizer (default none)
  nu       = FLOAT   penalty strength (default 0.1)
  scale    = BOOL    affine per-column rescale of features to [-1, 1];
                     constant columns map to 0 (default: true for file data)

[solver]
  mode       = fixed | linesearch | warm_start | euclidean | armijo
               (default warm_start)
  lambda     = FLOAT  fixed-mode step (default 1/L from the model)
  lambda_max = FLOAT  backtracking start and warm-start initial step
               (default 4/L)
  alpha      = FLOAT  backtracking factor, also the guaranteed floor
               fraction alpha/L (default 0.5)
  tau        = FLOAT  Armijo backtracking factor for `armijo` runs
               (default 0.5)
  max_iter   = INT    iteration budget (default 500)
  gap_tol    = FLOAT  relative gap stop; negative disables it (default 1e-8)

[grid]                (bench only)
  alphas       = LIST  comma-separated (default 0.1,...,0.9)
  lambda_inits = LIST  comma-separated (default 1,5,10,15)

[run]
  seeds   = LIST  instance seeds, one problem per seed (default: problem.seed)
  workers = INT   parallel runs (default 1)
  timings = BOOL  write wall-clock times into traces; off by default so
                  reruns emit byte-identical artifacts (default false)

[output]
  dir = PATH  artifact directory (default out)";

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "problem",
        &[
            "kind", "data", "m", "n", "seed", "sigma", "epsilon", "penalty", "nu", "scale",
        ],
    ),
    (
        "solver",
        &[
            "mode", "lambda", "lambda_max", "alpha", "tau", "max_iter", "gap_tol",
        ],
    ),
    ("grid", &["alphas", "lambda_inits"]),
    ("run", &["seeds", "workers", "timings"]),
    ("output", &["dir"]),
];

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let doc = ConfigDoc::parse(text)?;
        doc.check_known(KNOWN_KEYS)?;

        let kind = match doc.get("problem", "kind") {
            Some(("logistic", _)) => ProblemKind::Logistic,
            Some(("exp_lp", _)) => ProblemKind::ExpLp,
            Some(("ot", _)) => ProblemKind::Ot,
            Some((other, line)) => {
                return Err(ConfigError::Parse {
                    line,
                    message: format!(
                        "unknown problem kind `{other}` (expected logistic, exp_lp, or ot)"
                    ),
                })
            }
            None => return Err(invalid("missing required key problem.kind")),
        };
        let data = doc
            .get("problem", "data")
            .map(|(v, _)| PathBuf::from(v));
        let m = parse_typed::<usize>(&doc, "problem", "m")?.unwrap_or(100);
        let n = parse_typed::<usize>(&doc, "problem", "n")?.unwrap_or(10);
        let problem_seed = parse_typed::<u64>(&doc, "problem", "seed")?.unwrap_or(0);
        let sigma = parse_typed::<f64>(&doc, "problem", "sigma")?
            .unwrap_or(crate::generate::DEFAULT_SIGMA);
        let epsilon = parse_typed::<f64>(&doc, "problem", "epsilon")?.unwrap_or(0.0);
        let penalty = match doc.get("problem", "penalty") {
            None | Some(("none", _)) => PenaltyKind::None,
            Some(("l1", _)) => PenaltyKind::L1,
            Some(("sql2", _)) => PenaltyKind::SquaredL2,
            Some((other, line)) => {
                return Err(ConfigError::Parse {
                    line,
                    message: format!("unknown penalty `{other}` (expected none, l1, or sql2)"),
                })
            }
        };
        let nu = parse_typed::<f64>(&doc, "problem", "nu")?.unwrap_or(0.1);
        let scale = parse_typed::<bool>(&doc, "problem", "scale")?.unwrap_or(data.is_some());

        let mode = match doc.get("solver", "mode") {
            None | Some(("warm_start", _)) => SolverMode::WarmStart,
            Some(("fixed", _)) => SolverMode::Fixed,
            Some(("linesearch", _)) => SolverMode::Linesearch,
            Some(("euclidean", _)) => SolverMode::Euclidean,
            Some(("armijo", _)) => SolverMode::Armijo,
            Some((other, line)) => {
                return Err(ConfigError::Parse {
                    line,
                    message: format!(
                        "unknown solver mode `{other}` \
                         (expected fixed, linesearch, warm_start, euclidean, or armijo)"
                    ),
                })
            }
        };
        let lambda = parse_typed::<f64>(&doc, "solver", "lambda")?;
        let lambda_max = parse_typed::<f64>(&doc, "solver", "lambda_max")?;
        let alpha = parse_typed::<f64>(&doc, "solver", "alpha")?.unwrap_or(0.5);
        let tau = parse_typed::<f64>(&doc, "solver", "tau")?.unwrap_or(0.5);
        let max_iter = parse_typed::<usize>(&doc, "solver", "max_iter")?.unwrap_or(500);
        let gap_tol = parse_typed::<f64>(&doc, "solver", "gap_tol")?.unwrap_or(1e-8);

        let alphas =
            parse_list_f64(&doc, "grid", "alphas")?.unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
        let lambda_inits = parse_list_f64(&doc, "grid", "lambda_inits")?
            .unwrap_or_else(|| DEFAULT_LAMBDA_INITS.to_vec());

        let seeds = parse_list_u64(&doc, "run", "seeds")?.unwrap_or_else(|| vec![problem_seed]);
        let workers = parse_typed::<usize>(&doc, "run", "workers")?.unwrap_or(1);
        let timings = parse_typed::<bool>(&doc, "run", "timings")?.unwrap_or(false);
        let out_dir = doc
            .get("output", "dir")
            .map(|(v, _)| PathBuf::from(v))
            .unwrap_or_else(|| PathBuf::from("out"));

        let cfg = ExperimentConfig {
            kind,
            data,
            m,
            n,
            problem_seed,
            sigma,
            epsilon,
            penalty,
            nu,
            scale,
            mode,
            lambda,
            lambda_max,
            alpha,
            tau,
            max_iter,
            gap_tol,
            alphas,
            lambda_inits,
            seeds,
            workers,
            timings,
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.m == 0 || self.n == 0 {
            return Err(invalid("problem.m and problem.n must be positive"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("problem.sigma must be positive and finite"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("problem.epsilon must be nonnegative and finite"));
        }
        if self.penalty != PenaltyKind::None && !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(invalid("problem.nu must be positive when a penalty is set"));
        }
        if self.data.is_some() && self.kind != ProblemKind::Logistic {
            return Err(invalid("problem.data is only supported for kind = logistic"));
        }
        if let Some(lambda) = self.lambda {
            if !(lambda > 0.0 && lambda.is_finite()) {
                return Err(invalid("solver.lambda must be positive and finite"));
            }
        }
        if let Some(lambda_max) = self.lambda_max {
            if !(lambda_max > 0.0 && lambda_max.is_finite()) {
                return Err(invalid("solver.lambda_max must be positive and finite"));
            }
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid("solver.alpha must lie in (0, 1)"));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(invalid("solver.tau must lie in (0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(invalid("solver.max_iter must be positive"));
        }
        if self.gap_tol.is_nan() {
            return Err(invalid("solver.gap_tol must not be NaN"));
        }
        if self.alphas.is_empty() || self.alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
            return Err(invalid("grid.alphas must be a nonempty list inside (0, 1)"));
        }
        if self.lambda_inits.is_empty()
            || self
                .lambda_inits
                .iter()
                .any(|l| !(*l > 0.0 && l.is_finite()))
        {
            return Err(invalid(
                "grid.lambda_inits must be a nonempty list of positive values",
            ));
        }
        if self.seeds.is_empty() {
            return Err(invalid("run.seeds must list at least one seed"));
        }
        if self.workers == 0 {
            return Err(invalid("run.workers must be at least 1"));
        }
        Ok(())
    }
}
