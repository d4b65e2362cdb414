//! Model-free structured policy iteration.
//!
//! The gradient is estimated from rollout costs of randomly perturbed
//! policies (sphere smoothing) and fed to a fixed-stepsize proximal step.
//! The plant is only used as a simulator, plus for oracle telemetry in the
//! trace which the algorithm itself never reads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lqr::{self, Plant, Policy, RegularizedProblem};
use crate::spi::{self, SolveReport, SolveStatus, StepInfo, Tracker};

/// Rollout costs are clamped here when the perturbed closed loop blows up.
pub const COST_CEILING: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFreeConfig {
    pub n_traj: usize,
    pub horizon: usize,
    /// Smoothing radius `r` of the perturbation sphere.
    pub radius: f64,
    /// Fixed stepsize.
    pub eta: f64,
    pub eps_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for ModelFreeConfig {
    fn default() -> Self {
        Self {
            n_traj: 10_000,
            horizon: 100,
            radius: 0.05,
            eta: 1e-6,
            eps_tol: 1e-6,
            max_iters: 300,
            seed: 0,
        }
    }
}

impl ModelFreeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 || self.horizon == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument(
                "n_traj, horizon and max_iters must be positive".into(),
            ));
        }
        for (v, name) in [(self.radius, "radius"), (self.eta, "eta"), (self.eps_tol, "eps_tol")] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One perturbed rollout: the perturbation `U` (with `‖U‖_F = r`) and the
/// accumulated cost of the perturbed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub perturbation: Matrix,
    pub cost: f64,
    pub diverged: bool,
}

/// Uniform sample on the Frobenius sphere of radius `radius` in `R^{m×n}`.
pub fn sample_sphere<R: Rng + ?Sized>(m: usize, n: usize, radius: f64, rng: &mut R) -> Result<Matrix> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("sphere radius must be positive, got {radius}")));
    }
    loop {
        let g = Matrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            return Ok(g * (radius / norm));
        }
    }
}

/// Initial state uniform on the sphere of radius `√n`, so `E[x₀x₀ᵀ] = I`.
pub fn sample_x0<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            return g * ((n as f64).sqrt() / norm);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutCost {
    pub cost: f64,
    /// The cost exceeded [`COST_CEILING`] and was clamped.
    pub diverged: bool,
}

/// `Σ_{t=0}^{H} x_tᵀQx_t + u_tᵀRu_t` along `x_{t+1} = (A + BK̂)x_t`.
pub fn rollout_cost(plant: &Plant, policy: &Policy, x0: &DVector<f64>, horizon: usize) -> Result<RolloutCost> {
    plant.check_policy(policy)?;
    if x0.len() != plant.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has length {}, plant state dimension is {}",
            x0.len(),
            plant.state_dim()
        )));
    }
    let k = policy.gain();
    let closed = plant.closed_loop(policy);
    let stage = plant.q() + k.transpose() * plant.r() * k;
    let n = x0.len();
    let (closed, stage) = (closed.as_slice(), stage.as_slice());
    let mut x = x0.as_slice().to_vec();
    let mut next = vec![0.0; n];
    let mut total = 0.0;
    for _ in 0..=horizon {
        next.fill(0.0);
        let mut stage_cost = 0.0;
        // Column-major storage: column j of a matrix is `data[j*n..(j+1)*n]`.
        for (j, &xj) in x.iter().enumerate() {
            let (cm, sm) = (&closed[j * n..(j + 1) * n], &stage[j * n..(j + 1) * n]);
            let mut col = 0.0;
            for i in 0..n {
                next[i] += cm[i] * xj;
                col += sm[i] * x[i];
            }
            stage_cost += col * xj;
        }
        total += stage_cost;
        if !(total <= COST_CEILING) {
            return Ok(RolloutCost {
                cost: COST_CEILING,
                diverged: true,
            });
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(RolloutCost {
        cost: total,
        diverged: false,
    })
}

/// `(1/N) Σⱼ (d/r²) f̂ʲ Uʲ` with `d = m·n`.
pub fn estimate_gradient(samples: &[TrajectorySample], radius: f64, m: usize, n: usize) -> Result<Matrix> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no trajectory samples".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!("smoothing radius must be positive, got {radius}")));
    }
    let d = (m * n) as f64;
    let mut acc = Matrix::zeros(m, n);
    for s in samples {
        if s.perturbation.shape() != (m, n) {
            return Err(Error::Dimension("perturbation shape does not match the policy".into()));
        }
        acc += &s.perturbation * s.cost;
    }
    Ok(acc * (d / (radius * radius * samples.len() as f64)))
}

/// Stream-separated generator for trajectory `traj` of iteration `iter`.
fn trajectory_rng(seed: u64, iter: usize, traj: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((iter as u64) << 32) | traj as u64);
    rng
}

/// Draws `n_traj` perturbed rollouts around `policy`. Results depend only
/// on `(seed, iter, j)`, never on scheduling.
pub fn perturbed_rollouts(
    plant: &Plant,
    policy: &Policy,
    config: &ModelFreeConfig,
    iter: usize,
) -> Result<Vec<TrajectorySample>> {
    let (m, n) = (plant.input_dim(), plant.state_dim());
    (0..config.n_traj)
        .into_par_iter()
        .map(|j| {
            let mut rng = trajectory_rng(config.seed, iter, j);
            let u = sample_sphere(m, n, config.radius, &mut rng)?;
            let x0 = sample_x0(n, &mut rng);
            let perturbed = Policy::new(policy.gain() + &u)?;
            let roll = rollout_cost(plant, &perturbed, &x0, config.horizon)?;
            Ok(TrajectorySample {
                perturbation: u,
                cost: roll.cost,
                diverged: roll.diverged,
            })
        })
        .collect()
}

/// Model-free structured policy iteration with a fixed stepsize.
///
/// The trace records the exact objective of each iterate as simulator-side
/// telemetry; `grad_norm` holds the norm of the gradient estimate. An
/// iterate that is not stabilizing ends the run with
/// [`SolveStatus::Diverged`].
pub fn solve_model_free(problem: &RegularizedProblem, k0: &Policy, config: &ModelFreeConfig) -> Result<SolveReport> {
    config.validate()?;
    let plant = &problem.plant;
    spi::require_stabilizing(plant, k0)?;
    let (m, n) = (plant.input_dim(), plant.state_dim());

    let mut tracker = Tracker::new(false);
    let mut k = k0.clone();
    tracker.record(problem, 0, &k, lqr::cost(plant, &k)?, spi::NO_STEP)?;
    for iter in 1..=config.max_iters {
        let samples = perturbed_rollouts(plant, &k, config, iter)?;
        let grad = estimate_gradient(&samples, config.radius, m, n)?;
        let next = spi::prox_grad_step(&k, &grad, config.eta, &problem.reg, problem.lambda())?;
        let oracle_cost = match lqr::cost(plant, &next) {
            Ok(f) => f,
            Err(Error::Unstable { .. }) | Err(Error::Numerical(_)) => {
                return Ok(tracker.finish(k, SolveStatus::Diverged));
            }
            Err(e) => return Err(e),
        };
        let step_norm = (next.gain() - k.gain()).norm();
        k = next;
        tracker.record(
            problem,
            iter,
            &k,
            oracle_cost,
            StepInfo {
                stepsize: config.eta,
                grad_norm: grad.norm(),
                step_norm,
            },
        )?;
        if step_norm <= config.eps_tol {
            return Ok(tracker.finish(k, SolveStatus::Converged));
        }
    }
    Ok(tracker.finish(k, SolveStatus::MaxIters))
}
