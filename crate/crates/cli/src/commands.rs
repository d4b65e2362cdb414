use std::path::{Path, PathBuf};

use spi_core::experiments;
use spi_core::{spi, Plant, Policy, RegularizedProblem, Regularizer};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::matrix_io::write_matrix;
use crate::output::{num, timing, CsvOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    SweepLambda,
    StepsizeDependency,
    FixedStepTrace,
    Scalability,
    ModelFree,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::SweepLambda => "sweep-lambda",
            Command::StepsizeDependency => "stepsize-dependency",
            Command::FixedStepTrace => "fixed-step-trace",
            Command::Scalability => "scalability",
            Command::ModelFree => "model-free",
        }
    }
}

/// Everything a command needs, checked before any numerical work starts so
/// that configuration problems are reported as such.
struct Prepared {
    plant: Plant,
    reg: Regularizer,
    k0: Option<Policy>,
}

fn prepare(config: &ExperimentConfig, command: Command) -> Result<Prepared, CliError> {
    match command {
        Command::Solve | Command::FixedStepTrace | Command::ModelFree => {
            config.require_lambda()?;
        }
        Command::SweepLambda | Command::StepsizeDependency => {
            config.require_lambdas()?;
        }
        Command::Scalability => {}
    }
    if command == Command::FixedStepTrace && config.fixed_eta.is_none() {
        return Err(CliError::Config("fixed-step-trace needs `fixed_eta`".into()));
    }
    let plant = config.build_plant()?;
    let reg = config.build_regularizer(&plant)?;
    let k0 = config.initial_policy()?;
    if let Some(k) = &k0 {
        if k.gain().shape() != (plant.input_dim(), plant.state_dim()) {
            return Err(CliError::Config(format!(
                "k0 has shape {:?}, expected {:?}",
                k.gain().shape(),
                (plant.input_dim(), plant.state_dim())
            )));
        }
    }
    Ok(Prepared { plant, reg, k0 })
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let prepared = prepare(config, command)?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    match command {
        Command::Solve => solve(config, prepared, dir),
        Command::SweepLambda => sweep_lambda(config, prepared, dir),
        Command::StepsizeDependency => stepsize_dependency(config, prepared, dir),
        Command::FixedStepTrace => fixed_step_trace(config, prepared, dir),
        Command::Scalability => scalability(config, dir),
        Command::ModelFree => model_free(config, prepared, dir),
    }
}

fn start_policy(plant: &Plant, k0: Option<Policy>) -> Result<Policy, CliError> {
    match k0 {
        Some(k) => Ok(k),
        None => Ok(plant.riccati()?.1),
    }
}

fn solve(config: &ExperimentConfig, p: Prepared, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lambda = config.require_lambda()?;
    let k0 = start_policy(&p.plant, p.k0)?;
    let problem = RegularizedProblem::new(p.plant, p.reg, lambda)?;
    let report = spi::solve(&problem, &k0, &config.solver)?;

    let notes = [format!("status: {}", report.status)];
    let mut csv = CsvOutput::create(
        dir,
        "solve.csv",
        Command::Solve.name(),
        config,
        &notes,
        &[
            "iter",
            "F",
            "f",
            "penalty",
            "stepsize",
            "grad_map_norm",
            "cardinality",
            "spectral_radius",
            "elapsed_ms",
        ],
    )?;
    for rec in &report.trace {
        csv.row(&[
            rec.iter.to_string(),
            num(rec.objective),
            num(rec.cost),
            num(rec.penalty),
            num(rec.stepsize),
            num(rec.grad_map_norm),
            rec.cardinality.to_string(),
            num(rec.spectral_radius),
            timing(rec.elapsed_ms, config.record_timing),
        ])?;
    }
    let k_path = dir.join("K_final.txt");
    write_matrix(&k_path, report.final_policy.gain())?;
    Ok(vec![csv.finish()?, k_path])
}

fn sweep_lambda(config: &ExperimentConfig, p: Prepared, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lambdas = config.require_lambdas()?;
    let rows = experiments::run_lambda_sweep(&p.plant, &p.reg, lambdas, &config.solver)?;
    let mut csv = CsvOutput::create(
        dir,
        "lambda_sweep.csv",
        Command::SweepLambda.name(),
        config,
        &[],
        &["lambda", "f_K", "F_K", "cardinality", "iterations", "elapsed_ms", "status"],
    )?;
    let mut written = Vec::new();
    for (idx, row) in rows.iter().enumerate() {
        csv.row(&[
            num(row.lambda),
            num(row.cost),
            num(row.objective),
            row.cardinality.to_string(),
            row.iterations.to_string(),
            timing(row.elapsed_ms, config.record_timing),
            row.status.clone(),
        ])?;
        if let Some(policy) = &row.policy {
            let path = dir.join(format!("K_lambda_{idx:03}.txt"));
            write_matrix(&path, policy.gain())?;
            written.push(path);
        }
    }
    written.insert(0, csv.finish()?);
    Ok(written)
}

fn stepsize_dependency(config: &ExperimentConfig, p: Prepared, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lambdas = config.require_lambdas()?;
    let rows = experiments::run_stepsize_dependency(&p.plant, &p.reg, lambdas, config.stability_budget)?;
    let notes = [format!("stability budget: {} iterations", config.stability_budget)];
    let mut csv = CsvOutput::create(
        dir,
        "stepsize_dependency.csv",
        Command::StepsizeDependency.name(),
        config,
        &notes,
        &["lambda", "eta_max_stable"],
    )?;
    for row in rows {
        csv.row(&[num(row.lambda), num(row.eta_max_stable)])?;
    }
    Ok(vec![csv.finish()?])
}

fn fixed_step_trace(config: &ExperimentConfig, p: Prepared, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lambda = config.require_lambda()?;
    let eta = config
        .fixed_eta
        .ok_or_else(|| CliError::Config("fixed-step-trace needs `fixed_eta`".into()))?;
    let problem = RegularizedProblem::new(p.plant, p.reg, lambda)?;
    let trace = experiments::run_fixed_step_trace(&problem, eta, config.trace_iters, &config.solver)?;
    let notes = [format!("status: {}", trace.status)];
    let mut csv = CsvOutput::create(
        dir,
        "fixed_step_trace.csv",
        Command::FixedStepTrace.name(),
        config,
        &notes,
        &["iter", "F", "f", "cardinality", "err_to_linesearch_solution", "spectral_radius"],
    )?;
    for row in &trace.rows {
        csv.row(&[
            row.iter.to_string(),
            num(row.objective),
            num(row.cost),
            row.cardinality.to_string(),
            num(row.err),
            num(row.spectral_radius),
        ])?;
    }
    Ok(vec![csv.finish()?])
}

fn scalability(config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows = experiments::run_scalability(&config.ns, config.scalability_lambda, &config.solver)?;
    let notes = [
        format!("lambda: {}", num(config.scalability_lambda)),
        "system: laplacian family with lasso; riccati initialization excluded from timing".to_string(),
    ];
    let mut csv = CsvOutput::create(
        dir,
        "scalability.csv",
        Command::Scalability.name(),
        config,
        &notes,
        &["n", "elapsed_ms", "iterations", "status"],
    )?;
    for row in rows {
        csv.row(&[
            row.n.to_string(),
            timing(row.elapsed_ms, config.record_timing),
            row.iterations.to_string(),
            row.status,
        ])?;
    }
    Ok(vec![csv.finish()?])
}

fn model_free(config: &ExperimentConfig, p: Prepared, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let lambda = config.require_lambda()?;
    let k0 = match p.k0 {
        Some(k) => k,
        None => experiments::perturbed_lqr_start(&p.plant, config.start_offset)?,
    };
    let problem = RegularizedProblem::new(p.plant, p.reg, lambda)?;
    let run = experiments::run_model_free(&problem, &k0, &config.model_free)?;
    let notes = [
        format!("status: {}", run.status),
        "F_oracle is telemetry computed from the model and is never seen by the estimator".to_string(),
    ];
    let mut csv = CsvOutput::create(
        dir,
        "model_free.csv",
        Command::ModelFree.name(),
        config,
        &notes,
        &["iter", "F_oracle", "grad_est_norm", "cardinality", "spectral_radius", "seed"],
    )?;
    for row in &run.rows {
        csv.row(&[
            row.iter.to_string(),
            num(row.objective_oracle),
            num(row.grad_est_norm),
            row.cardinality.to_string(),
            num(row.spectral_radius),
            row.seed.to_string(),
        ])?;
    }
    let k_path = dir.join("K_final.txt");
    write_matrix(&k_path, run.final_policy.gain())?;
    Ok(vec![csv.finish()?, k_path])
}
