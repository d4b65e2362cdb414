//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Relative paths are resolved against the directory of the config file.
//! Unknown keys are rejected so typos do not silently fall back to defaults.
//!
//! ```text
//! system = laplacian
//! n = 3
//! regularizer = lasso
//! lambda_grid = 1e-2 1e6 17
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use spi_core::experiments::{self, MODEL_FREE_START_OFFSET, SCALABILITY_LAMBDA, STABILITY_BUDGET};
use spi_core::spi::InitialStepsize;
use spi_core::{Groups, Matrix, ModelFreeConfig, Plant, Policy, Regularizer, SpiConfig};

use crate::error::CliError;
use crate::matrix_io;

#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec {
    Laplacian { n: usize },
    Files {
        a: PathBuf,
        b: PathBuf,
        q: PathBuf,
        r: PathBuf,
        sigma0: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroupSpec {
    Rows,
    Cols,
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RegularizerSpec {
    Lasso,
    GroupLasso(GroupSpec),
    Nuclear,
    ElasticNet { l1: f64, l2: f64 },
    FrobToRef(PathBuf),
    Nonnegative,
    Simplex,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub regularizer: RegularizerSpec,
    pub lambda: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub solver: SpiConfig,
    pub k0: Option<PathBuf>,
    pub fixed_eta: Option<f64>,
    pub trace_iters: usize,
    pub stability_budget: usize,
    pub ns: Vec<usize>,
    pub scalability_lambda: f64,
    pub model_free: ModelFreeConfig,
    pub start_offset: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub record_timing: bool,
    /// Settings as written, for echoing into output headers.
    pub entries: BTreeMap<String, String>,
}

struct Raw {
    values: BTreeMap<String, String>,
    base: PathBuf,
}

impl Raw {
    fn take(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.take(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::Config(format!("invalid value for `{key}`: {v:?}")))
            })
            .transpose()
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        self.take(key).map(|v| self.base.join(v))
    }

    fn require_path(&mut self, key: &str) -> Result<PathBuf, CliError> {
        self.path(key)
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, text: &str) -> Result<Vec<T>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| CliError::Config(format!("invalid entry {s:?} in `{key}`")))
        })
        .collect()
}

fn parse_groups(text: &str) -> Result<GroupSpec, CliError> {
    match text {
        "rows" => Ok(GroupSpec::Rows),
        "cols" => Ok(GroupSpec::Cols),
        explicit => explicit
            .split(';')
            .map(|g| parse_list::<usize>("groups", g))
            .collect::<Result<Vec<_>, _>>()
            .map(GroupSpec::Explicit),
    }
}

pub fn parse_entries(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut values = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(CliError::Config(format!("line {}: empty key", lineno + 1)));
        }
        if values.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(values)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let entries = parse_entries(text)?;
        let mut raw = Raw {
            values: entries.clone(),
            base: base.to_path_buf(),
        };

        let system = match raw.take("system").as_deref().unwrap_or("laplacian") {
            "laplacian" => {
                let n = raw.parse::<usize>("n")?.unwrap_or(3);
                if n == 0 {
                    return Err(CliError::Config("`n` must be at least 1".into()));
                }
                SystemSpec::Laplacian { n }
            }
            "file" => SystemSpec::Files {
                a: raw.require_path("a_path")?,
                b: raw.require_path("b_path")?,
                q: raw.require_path("q_path")?,
                r: raw.require_path("r_path")?,
                sigma0: raw.path("sigma0_path"),
            },
            other => return Err(CliError::Config(format!("unknown system {other:?}"))),
        };

        let regularizer = match raw.take("regularizer").as_deref().unwrap_or("lasso") {
            "lasso" => RegularizerSpec::Lasso,
            "group_lasso" => {
                let groups = raw.take("groups").unwrap_or_else(|| "rows".into());
                RegularizerSpec::GroupLasso(parse_groups(&groups)?)
            }
            "nuclear" => RegularizerSpec::Nuclear,
            "elastic_net" => RegularizerSpec::ElasticNet {
                l1: raw.parse("l1")?.unwrap_or(1.0),
                l2: raw.parse("l2")?.unwrap_or(1.0),
            },
            "frob_to_ref" => RegularizerSpec::FrobToRef(raw.require_path("k_ref_path")?),
            "nonnegative" => RegularizerSpec::Nonnegative,
            "simplex" => RegularizerSpec::Simplex,
            other => return Err(CliError::Config(format!("unknown regularizer {other:?}"))),
        };

        let lambda = raw.parse::<f64>("lambda")?;
        if let Some(l) = lambda {
            if !(l.is_finite() && l >= 0.0) {
                return Err(CliError::Config("`lambda` must be finite and nonnegative".into()));
            }
        }
        let listed = raw.take("lambdas").map(|v| parse_list::<f64>("lambdas", &v)).transpose()?;
        let grid = match raw.take("lambda_grid") {
            Some(v) => {
                let parts = parse_list::<f64>("lambda_grid", &v)?;
                let [lo, hi, count] = parts[..] else {
                    return Err(CliError::Config("`lambda_grid` expects `lo hi count`".into()));
                };
                if !(lo > 0.0 && hi > lo && count >= 1.0 && count.fract() == 0.0) {
                    return Err(CliError::Config("`lambda_grid` needs 0 < lo < hi and integer count".into()));
                }
                Some(experiments::log_grid(lo, hi, count as usize))
            }
            None => None,
        };
        let lambdas = match (listed, grid) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give either `lambdas` or `lambda_grid`, not both".into()))
            }
            (l, g) => l.or(g),
        };
        if let Some(l) = &lambdas {
            experiments::validate_lambda_grid(l).map_err(|e| CliError::Config(e.to_string()))?;
        }

        let defaults = SpiConfig::default();
        let eta0 = match raw.parse::<f64>("eta0")? {
            Some(eta) => InitialStepsize::Constant(eta),
            None => InitialStepsize::InverseLambda {
                floor: raw.parse("lambda_floor")?.unwrap_or(1e-8),
            },
        };
        let solver = SpiConfig {
            beta: raw.parse("beta")?.unwrap_or(defaults.beta),
            eps_tol: raw.parse("eps_tol")?.unwrap_or(defaults.eps_tol),
            max_iters: raw.parse("max_iters")?.unwrap_or(defaults.max_iters),
            max_linesearch: raw.parse("max_linesearch")?.unwrap_or(defaults.max_linesearch),
            eta0,
            record_iterates: false,
        };
        solver.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let k0 = raw.path("k0_path");
        let fixed_eta = raw.parse::<f64>("fixed_eta")?;
        if fixed_eta.is_some_and(|e| !(e > 0.0 && e.is_finite())) {
            return Err(CliError::Config("`fixed_eta` must be positive".into()));
        }
        let trace_iters = raw.parse("trace_iters")?.unwrap_or(5_000);
        let stability_budget = raw.parse("stability_budget")?.unwrap_or(STABILITY_BUDGET);
        if stability_budget == 0 || trace_iters == 0 {
            return Err(CliError::Config("iteration budgets must be positive".into()));
        }
        let ns = match raw.take("ns") {
            Some(v) => parse_list::<usize>("ns", &v)?,
            None => vec![10, 50, 100, 200, 300, 400, 500],
        };
        if ns.is_empty() || ns.contains(&0) {
            return Err(CliError::Config("`ns` must list dimensions of at least 1".into()));
        }
        let scalability_lambda = raw.parse("scalability_lambda")?.unwrap_or(SCALABILITY_LAMBDA);

        let seed = raw.parse::<u64>("seed")?.unwrap_or(0);
        let mf_defaults = ModelFreeConfig::default();
        let model_free = ModelFreeConfig {
            n_traj: raw.parse("n_traj")?.unwrap_or(mf_defaults.n_traj),
            horizon: raw.parse("horizon")?.unwrap_or(mf_defaults.horizon),
            radius: raw.parse("radius")?.unwrap_or(mf_defaults.radius),
            eta: raw.parse("mf_eta")?.unwrap_or(mf_defaults.eta),
            eps_tol: raw.parse("mf_eps_tol")?.unwrap_or(mf_defaults.eps_tol),
            max_iters: raw.parse("mf_max_iters")?.unwrap_or(mf_defaults.max_iters),
            seed,
        };
        model_free.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let start_offset = raw.parse("start_offset")?.unwrap_or(MODEL_FREE_START_OFFSET);

        let output_dir = raw.path("output_dir").unwrap_or_else(|| base.join("out"));
        let record_timing = raw.parse("record_timing")?.unwrap_or(true);

        if let Some(key) = raw.values.keys().next() {
            return Err(CliError::Config(format!("unknown key `{key}`")));
        }

        Ok(Self {
            system,
            regularizer,
            lambda,
            lambdas,
            solver,
            k0,
            fixed_eta,
            trace_iters,
            stability_budget,
            ns,
            scalability_lambda,
            model_free,
            start_offset,
            output_dir,
            seed,
            record_timing,
            entries,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.model_free.seed = seed;
        self.entries.insert("seed".into(), seed.to_string());
    }

    pub fn require_lambda(&self) -> Result<f64, CliError> {
        self.lambda
            .ok_or_else(|| CliError::Config("this command needs `lambda`".into()))
    }

    pub fn require_lambdas(&self) -> Result<&[f64], CliError> {
        self.lambdas
            .as_deref()
            .ok_or_else(|| CliError::Config("this command needs `lambdas` or `lambda_grid`".into()))
    }

    pub fn build_plant(&self) -> Result<Plant, CliError> {
        let plant = match &self.system {
            SystemSpec::Laplacian { n } => experiments::make_laplacian(*n),
            SystemSpec::Files { a, b, q, r, sigma0 } => {
                let a = matrix_io::read_matrix(a)?;
                let sigma0 = match sigma0 {
                    Some(p) => matrix_io::read_matrix(p)?,
                    None => Matrix::identity(a.nrows(), a.nrows()),
                };
                Plant::new(
                    a,
                    matrix_io::read_matrix(b)?,
                    matrix_io::read_matrix(q)?,
                    matrix_io::read_matrix(r)?,
                    sigma0,
                )
            }
        };
        plant.map_err(|e| CliError::Config(format!("invalid system: {e}")))
    }

    pub fn build_regularizer(&self, plant: &Plant) -> Result<Regularizer, CliError> {
        let (m, n) = (plant.input_dim(), plant.state_dim());
        let reg = match &self.regularizer {
            RegularizerSpec::Lasso => Regularizer::Lasso,
            RegularizerSpec::GroupLasso(GroupSpec::Rows) => Regularizer::GroupLasso(Groups::rows(m, n)),
            RegularizerSpec::GroupLasso(GroupSpec::Cols) => Regularizer::GroupLasso(Groups::cols(m, n)),
            RegularizerSpec::GroupLasso(GroupSpec::Explicit(g)) => Regularizer::GroupLasso(
                Groups::new(g.clone()).map_err(|e| CliError::Config(e.to_string()))?,
            ),
            RegularizerSpec::Nuclear => Regularizer::Nuclear,
            RegularizerSpec::ElasticNet { l1, l2 } => Regularizer::ElasticNet { l1: *l1, l2: *l2 },
            RegularizerSpec::FrobToRef(path) => Regularizer::FrobToRef(matrix_io::read_matrix(path)?),
            RegularizerSpec::Nonnegative => Regularizer::Nonnegative,
            RegularizerSpec::Simplex => Regularizer::Simplex,
        };
        reg.validate_for(&Matrix::zeros(m, n))
            .map_err(|e| CliError::Config(format!("invalid regularizer: {e}")))?;
        Ok(reg)
    }

    /// Starting policy: `k0_path` when given, otherwise `None` (callers use
    /// the Riccati gain).
    pub fn initial_policy(&self) -> Result<Option<Policy>, CliError> {
        self.k0
            .as_ref()
            .map(|p| {
                Policy::new(matrix_io::read_matrix(p)?).map_err(|e| CliError::Config(e.to_string()))
            })
            .transpose()
    }
}
