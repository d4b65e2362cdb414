//! Benchmark systems and experiment runners.
//!
//! Runners return typed rows; serialization lives in the CLI. Independent grid
//! points run on the ambient rayon pool and come back in grid order.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lqr::{self, Plant, Policy, RegularizedProblem};
use crate::model_free::{self, ModelFreeConfig};
use crate::regularizers::Regularizer;
use crate::spi::{self, SolveStatus, SpiConfig, CARDINALITY_TOL};

/// Inner iteration budget of the fixed-stepsize stability search.
pub const STABILITY_BUDGET: usize = 500;
/// Relative bracket width at which the stepsize search stops.
pub const STEPSIZE_RESOLUTION: f64 = 0.05;
/// `λ` used by the scalability experiment.
pub const SCALABILITY_LAMBDA: f64 = 1.0;
/// Diagonal offset from `K_lqr` for model-free starting policies.
pub const MODEL_FREE_START_OFFSET: f64 = 0.03;

/// Tridiagonal Laplacian-like dynamics: `A` has `1.1` on the diagonal and
/// `0.1` on the first off-diagonals, `B = Q = I`, `R = 1000·I`, `Σ₀ = I`.
pub fn make_laplacian(n: usize) -> Result<Plant> {
    if n == 0 {
        return Err(Error::InvalidArgument("system dimension must be at least 1".into()));
    }
    let a = Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => 1.1,
        1 => 0.1,
        _ => 0.0,
    });
    let eye = Matrix::identity(n, n);
    Plant::with_identity_covariance(a, eye.clone(), eye.clone(), eye * 1000.0)
}

/// `count` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Checks that a `λ` grid is nonnegative and strictly increasing.
pub fn validate_lambda_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(Error::InvalidArgument("lambda values must be finite and nonnegative".into()));
    }
    if lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("lambda grid must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    /// `f(K)` of the final policy.
    pub cost: f64,
    /// `F(K)` of the final policy.
    pub objective: f64,
    pub cardinality: usize,
    pub iterations: usize,
    pub elapsed_ms: f64,
    /// Solver status, or `error` when the solve raised.
    pub status: String,
    pub policy: Option<Policy>,
}

/// Solves the regularized problem for every `λ` from `K⁰ = K_lqr`.
pub fn run_lambda_sweep(plant: &Plant, reg: &Regularizer, lambdas: &[f64], config: &SpiConfig) -> Result<Vec<SweepRow>> {
    validate_lambda_grid(lambdas)?;
    config.validate()?;
    let (_, k_lqr) = plant.riccati()?;
    Ok(lambdas
        .par_iter()
        .map(|&lambda| {
            let start = Instant::now();
            let outcome = RegularizedProblem::new(plant.clone(), reg.clone(), lambda)
                .and_then(|problem| spi::solve(&problem, &k_lqr, config));
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            match outcome {
                Ok(report) => {
                    let last = report.last();
                    SweepRow {
                        lambda,
                        cost: last.cost,
                        objective: last.objective,
                        cardinality: last.cardinality,
                        iterations: report.iterations(),
                        elapsed_ms,
                        status: report.status.to_string(),
                        policy: Some(report.final_policy),
                    }
                }
                Err(_) => SweepRow {
                    lambda,
                    cost: f64::INFINITY,
                    objective: f64::INFINITY,
                    cardinality: 0,
                    iterations: 0,
                    elapsed_ms,
                    status: "error".into(),
                    policy: None,
                },
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeRow {
    pub lambda: f64,
    pub eta_max_stable: f64,
}

/// Whether a fixed-stepsize run keeps every iterate stabilizing for the
/// whole budget.
pub fn fixed_step_is_stable(problem: &RegularizedProblem, k0: &Policy, eta: f64, budget: usize) -> Result<bool> {
    let report = spi::solve_fixed_step(problem, k0, eta, 1e-6, budget, false)?;
    Ok(report.status != SolveStatus::Diverged)
}

/// Largest fixed stepsize (to within `resolution`, relative) for which the
/// proximal gradient iteration from `k0` stays stabilizing over `budget`
/// iterations. Geometric bisection from a bracket around `1/λ`.
pub fn largest_stable_stepsize(
    problem: &RegularizedProblem,
    k0: &Policy,
    budget: usize,
    resolution: f64,
) -> Result<f64> {
    let stable = |eta: f64| fixed_step_is_stable(problem, k0, eta, budget);
    let start = 1.0 / problem.lambda().max(1e-8);
    let (mut lo, mut hi);
    if stable(start)? {
        lo = start;
        hi = start * 2.0;
        let mut grow = 0;
        while stable(hi)? {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Ok(lo);
            }
        }
    } else {
        hi = start;
        lo = start / 2.0;
        let mut shrink = 0;
        while !stable(lo)? {
            hi = lo;
            lo /= 2.0;
            shrink += 1;
            if shrink > 200 {
                return Err(Error::Numerical("no stable fixed stepsize found".into()));
            }
        }
    }
    while hi / lo > 1.0 + resolution {
        let mid = (lo * hi).sqrt();
        if stable(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Largest stable fixed stepsize for each `λ` with `K⁰ = K_lqr`.
pub fn run_stepsize_dependency(
    plant: &Plant,
    reg: &Regularizer,
    lambdas: &[f64],
    budget: usize,
) -> Result<Vec<StepsizeRow>> {
    validate_lambda_grid(lambdas)?;
    let (_, k_lqr) = plant.riccati()?;
    lambdas
        .par_iter()
        .map(|&lambda| {
            let problem = RegularizedProblem::new(plant.clone(), reg.clone(), lambda)?;
            let eta = largest_stable_stepsize(&problem, &k_lqr, budget, STEPSIZE_RESOLUTION)?;
            Ok(StepsizeRow {
                lambda,
                eta_max_stable: eta,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub cost: f64,
    pub cardinality: usize,
    /// `‖K^i − K*‖_F` against the linesearch solution.
    pub err: f64,
    pub spectral_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedStepTrace {
    pub rows: Vec<TraceRow>,
    pub status: SolveStatus,
    /// Linesearch solution used as the error reference.
    pub reference: Policy,
}

impl FixedStepTrace {
    pub fn diverged(&self) -> bool {
        self.status == SolveStatus::Diverged
    }
}

/// Fixed-stepsize run from `K_lqr`, with per-iterate distance to the
/// linesearch solution of the same problem.
pub fn run_fixed_step_trace(
    problem: &RegularizedProblem,
    eta: f64,
    max_iters: usize,
    config: &SpiConfig,
) -> Result<FixedStepTrace> {
    let (_, k_lqr) = problem.plant.riccati()?;
    let reference = spi::solve(problem, &k_lqr, config)?.final_policy;
    let report = spi::solve_fixed_step(problem, &k_lqr, eta, config.eps_tol, max_iters, true)?;
    let rows = report
        .trace
        .iter()
        .zip(&report.iterates)
        .map(|(rec, k)| TraceRow {
            iter: rec.iter,
            objective: rec.objective,
            cost: rec.cost,
            cardinality: rec.cardinality,
            err: (k.gain() - reference.gain()).norm(),
            spectral_radius: rec.spectral_radius,
        })
        .collect();
    Ok(FixedStepTrace {
        rows,
        status: report.status,
        reference,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityRow {
    pub n: usize,
    /// Wall time of the S-PI solve (Riccati initialization excluded).
    pub elapsed_ms: f64,
    pub iterations: usize,
    pub status: String,
}

/// Laplacian family solved at fixed `λ` with Lasso. Rows run sequentially
/// so timings are not distorted by sibling solves.
pub fn run_scalability(ns: &[usize], lambda: f64, config: &SpiConfig) -> Result<Vec<ScalabilityRow>> {
    if ns.is_empty() {
        return Err(Error::InvalidArgument("empty dimension list".into()));
    }
    ns.iter()
        .map(|&n| {
            let plant = make_laplacian(n)?;
            let (_, k_lqr) = plant.riccati()?;
            let problem = RegularizedProblem::new(plant, Regularizer::Lasso, lambda)?;
            let start = Instant::now();
            let outcome = spi::solve(&problem, &k_lqr, config);
            let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(match outcome {
                Ok(report) => ScalabilityRow {
                    n,
                    elapsed_ms,
                    iterations: report.iterations(),
                    status: report.status.to_string(),
                },
                Err(_) => ScalabilityRow {
                    n,
                    elapsed_ms,
                    iterations: 0,
                    status: "error".into(),
                },
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFreeRow {
    pub iter: usize,
    /// Exact objective of the iterate, computed by the simulator.
    pub objective_oracle: f64,
    pub grad_est_norm: f64,
    pub cardinality: usize,
    pub spectral_radius: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFreeRun {
    pub rows: Vec<ModelFreeRow>,
    pub status: SolveStatus,
    pub final_policy: Policy,
}

/// Model-free run from `k0` with per-iteration telemetry rows.
pub fn run_model_free(problem: &RegularizedProblem, k0: &Policy, config: &ModelFreeConfig) -> Result<ModelFreeRun> {
    let report = model_free::solve_model_free(problem, k0, config)?;
    let rows = report
        .trace
        .iter()
        .map(|rec| ModelFreeRow {
            iter: rec.iter,
            objective_oracle: rec.objective,
            grad_est_norm: rec.grad_norm,
            cardinality: rec.cardinality,
            spectral_radius: rec.spectral_radius,
            seed: config.seed,
        })
        .collect();
    Ok(ModelFreeRun {
        rows,
        status: report.status,
        final_policy: report.final_policy,
    })
}

/// `K_lqr` plus a scaled identity-pattern offset (entries `delta` on the
/// diagonal), the starting point used by the model-free experiments.
pub fn perturbed_lqr_start(plant: &Plant, delta: f64) -> Result<Policy> {
    let (_, k_lqr) = plant.riccati()?;
    let (m, n) = (plant.input_dim(), plant.state_dim());
    let start = Policy::new(k_lqr.gain() + Matrix::identity(m, n) * delta)?;
    if !lqr::is_stabilizing(plant, &start)? {
        let radius = linalg::spectral_radius(&plant.closed_loop(&start))?;
        return Err(Error::Unstable { radius });
    }
    Ok(start)
}

pub fn cardinality(policy: &Policy) -> usize {
    policy.cardinality(CARDINALITY_TOL)
}
