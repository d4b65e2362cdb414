//! Structured policy iteration with a known model.
//!
//! Each outer iteration evaluates the current policy (two Lyapunov solves),
//! forms the exact gradient, and takes a proximal gradient step whose size is
//! chosen by backtracking from `η₀ = 1/λ`. A trial step is accepted when the
//! closed loop stays Schur stable and the smooth cost satisfies the
//! sufficient-decrease test
//!
//! ```text
//! f(K⁺) ≤ f(K) − η·Tr(∇f(K)ᵀ G_η(K)) + (η/2)‖G_η(K)‖_F²
//! ```
//!
//! with gradient map `G_η(K) = (K − K⁺)/η`.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::lqr::{self, Evaluation, Plant, Policy, RegularizedProblem};
use crate::regularizers::{ProxWeight, Regularizer};

/// Entries with magnitude at or below this are counted as zero.
pub const CARDINALITY_TOL: f64 = 1e-6;

/// Rule for the first trial stepsize of every linesearch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialStepsize {
    /// `η₀ = 1 / max(λ, floor)`.
    InverseLambda { floor: f64 },
    Constant(f64),
}

impl InitialStepsize {
    pub fn eta0(self, lambda: f64) -> f64 {
        match self {
            InitialStepsize::InverseLambda { floor } => 1.0 / lambda.max(floor),
            InitialStepsize::Constant(eta) => eta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpiConfig {
    /// Backtracking shrink factor in `(0, 1)`.
    pub beta: f64,
    /// Stop once `‖K⁺ − K‖_F ≤ eps_tol`.
    pub eps_tol: f64,
    pub max_iters: usize,
    pub max_linesearch: usize,
    pub eta0: InitialStepsize,
    /// Keep every iterate in [`SolveReport::iterates`].
    pub record_iterates: bool,
}

impl Default for SpiConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            eps_tol: 1e-6,
            max_iters: 5_000,
            max_linesearch: 100,
            eta0: InitialStepsize::InverseLambda { floor: 1e-8 },
            record_iterates: false,
        }
    }
}

impl SpiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::InvalidArgument("eps_tol must be positive".into()));
        }
        if self.max_iters == 0 || self.max_linesearch == 0 {
            return Err(Error::InvalidArgument(
                "max_iters and max_linesearch must be positive".into(),
            ));
        }
        match self.eta0 {
            InitialStepsize::InverseLambda { floor } if !(floor > 0.0) => {
                Err(Error::InvalidArgument("initial stepsize floor must be positive".into()))
            }
            InitialStepsize::Constant(eta) if !(eta > 0.0 && eta.is_finite()) => {
                Err(Error::InvalidArgument("initial stepsize must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIters,
    LinesearchFailed,
    /// An iterate left the set of stabilizing policies (fixed-step runs only).
    Diverged,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::LinesearchFailed => "linesearch_failed",
            SolveStatus::Diverged => "diverged",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Telemetry for the iterate `K^iter`.
///
/// `stepsize`, `grad_map_norm` and `step_norm` describe the step that
/// produced this iterate and are zero for the initial policy. `grad_norm` is
/// the norm of the (exact or estimated) gradient at the previous iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `F = f + λr`
    pub objective: f64,
    pub cost: f64,
    pub penalty: f64,
    pub stepsize: f64,
    pub grad_norm: f64,
    pub grad_map_norm: f64,
    /// `‖K^iter − K^{iter−1}‖_F`
    pub step_norm: f64,
    pub spectral_radius: f64,
    pub cardinality: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_policy: Policy,
    pub status: SolveStatus,
    pub trace: Vec<IterationRecord>,
    /// Every iterate including `K⁰`, when requested.
    pub iterates: Vec<Policy>,
}

impl SolveReport {
    /// Number of policy updates performed.
    pub fn iterations(&self) -> usize {
        self.trace.last().map_or(0, |r| r.iter)
    }

    pub fn last(&self) -> &IterationRecord {
        self.trace.last().expect("trace is never empty")
    }
}

fn positive_stepsize(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("stepsize must be positive, got {eta}")))
    }
}

/// `prox_{r, λη}(K − η∇f(K))`.
pub fn prox_grad_step(
    policy: &Policy,
    gradient: &Matrix,
    eta: f64,
    reg: &Regularizer,
    lambda: f64,
) -> Result<Policy> {
    positive_stepsize(eta)?;
    if gradient.shape() != policy.gain().shape() {
        return Err(Error::Dimension("gradient and policy shapes differ".into()));
    }
    let g = policy.gain() - gradient * eta;
    Policy::new(reg.prox(&g, ProxWeight::new(lambda * eta)?)?)
}

/// `G_η(K) = (K − prox_grad_step(K))/η`.
pub fn gradient_map(
    policy: &Policy,
    gradient: &Matrix,
    eta: f64,
    reg: &Regularizer,
    lambda: f64,
) -> Result<Matrix> {
    let next = prox_grad_step(policy, gradient, eta, reg, lambda)?;
    Ok((policy.gain() - next.gain()) / eta)
}

/// Sufficient-decrease bound on `f(K⁺)` for a step of size `eta`.
fn descent_bound(f_cur: f64, gradient: &Matrix, k_cur: &Matrix, k_next: &Matrix, eta: f64) -> f64 {
    let gmap = (k_cur - k_next) / eta;
    f_cur - eta * gradient.dot(&gmap) + 0.5 * eta * gmap.norm_squared()
}

/// Runs the stability and decrease tests; returns the trial value matrix
/// when the step is accepted so it can be reused.
fn linesearch_trial(
    plant: &Plant,
    eval_cur: &Evaluation,
    gradient: &Matrix,
    k_cur: &Policy,
    k_next: &Policy,
    eta: f64,
) -> Result<Option<Matrix>> {
    // The Lyapunov solver certifies ρ(A+BK⁺) < 1 or reports instability.
    let p = match lqr::value_matrix(plant, k_next) {
        Ok(p) => p,
        Err(Error::Unstable { .. }) | Err(Error::Numerical(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let f_next = lqr::trace_product(plant.sigma0(), &p);
    let bound = descent_bound(eval_cur.f, gradient, k_cur.gain(), k_next.gain(), eta);
    Ok((f_next <= bound).then_some(p))
}

/// True iff `K_next` is stabilizing and satisfies the sufficient-decrease
/// test against `K_cur`.
pub fn linesearch_accepts(
    problem: &RegularizedProblem,
    k_cur: &Policy,
    eval_cur: &Evaluation,
    gradient: &Matrix,
    k_next: &Policy,
    eta: f64,
) -> Result<bool> {
    positive_stepsize(eta)?;
    Ok(linesearch_trial(&problem.plant, eval_cur, gradient, k_cur, k_next, eta)?.is_some())
}

pub(crate) struct Tracker {
    start: Instant,
    trace: Vec<IterationRecord>,
    iterates: Vec<Policy>,
    keep: bool,
}

pub(crate) struct StepInfo {
    pub stepsize: f64,
    pub grad_norm: f64,
    pub step_norm: f64,
}

impl Tracker {
    pub(crate) fn new(keep: bool) -> Self {
        Self {
            start: Instant::now(),
            trace: Vec::new(),
            iterates: Vec::new(),
            keep,
        }
    }

    pub(crate) fn record(
        &mut self,
        problem: &RegularizedProblem,
        iter: usize,
        policy: &Policy,
        cost: f64,
        step: StepInfo,
    ) -> Result<()> {
        let penalty = problem.reg.penalty(policy.gain())?;
        let weighted = problem.weighted_penalty(policy)?;
        let radius = linalg::spectral_radius(&problem.plant.closed_loop(policy))?;
        let grad_map_norm = if step.stepsize > 0.0 { step.step_norm / step.stepsize } else { 0.0 };
        self.trace.push(IterationRecord {
            iter,
            objective: cost + weighted,
            cost,
            penalty,
            stepsize: step.stepsize,
            grad_norm: step.grad_norm,
            grad_map_norm,
            step_norm: step.step_norm,
            spectral_radius: radius,
            cardinality: policy.cardinality(CARDINALITY_TOL),
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
        if self.keep {
            self.iterates.push(policy.clone());
        }
        Ok(())
    }

    pub(crate) fn finish(self, final_policy: Policy, status: SolveStatus) -> SolveReport {
        SolveReport {
            final_policy,
            status,
            trace: self.trace,
            iterates: self.iterates,
        }
    }
}

pub(crate) const NO_STEP: StepInfo = StepInfo {
    stepsize: 0.0,
    grad_norm: 0.0,
    step_norm: 0.0,
};

pub(crate) fn require_stabilizing(plant: &Plant, policy: &Policy) -> Result<()> {
    plant.check_policy(policy)?;
    let radius = linalg::spectral_radius(&plant.closed_loop(policy))?;
    if radius < 1.0 {
        Ok(())
    } else {
        Err(Error::Unstable { radius })
    }
}

/// Structured policy iteration with backtracking linesearch.
///
/// `k0` must be stabilizing. Exhausting the linesearch budget is reported
/// through [`SolveStatus::LinesearchFailed`] with the trace up to that point.
pub fn solve(problem: &RegularizedProblem, k0: &Policy, config: &SpiConfig) -> Result<SolveReport> {
    config.validate()?;
    let plant = &problem.plant;
    let reg = &problem.reg;
    let lambda = problem.lambda();
    require_stabilizing(plant, k0)?;

    let mut tracker = Tracker::new(config.record_iterates);
    let mut k = k0.clone();
    let mut eval = lqr::evaluate_policy(plant, &k)?;
    tracker.record(problem, 0, &k, eval.f, NO_STEP)?;
    let eta0 = config.eta0.eta0(lambda);

    for iter in 1..=config.max_iters {
        let gradient = lqr::policy_gradient(plant, &k, &eval)?;
        let mut eta = eta0;
        let mut accepted = None;
        for _ in 0..config.max_linesearch {
            eta *= config.beta;
            let trial = prox_grad_step(&k, &gradient, eta, reg, lambda)?;
            if let Some(p) = linesearch_trial(plant, &eval, &gradient, &k, &trial, eta)? {
                accepted = Some((trial, p));
                break;
            }
        }
        let Some((next, p)) = accepted else {
            return Ok(tracker.finish(k, SolveStatus::LinesearchFailed));
        };
        let step_norm = (next.gain() - k.gain()).norm();
        eval = lqr::evaluate_with_value(plant, &next, p)?;
        k = next;
        tracker.record(
            problem,
            iter,
            &k,
            eval.f,
            StepInfo {
                stepsize: eta,
                grad_norm: gradient.norm(),
                step_norm,
            },
        )?;
        if step_norm <= config.eps_tol {
            return Ok(tracker.finish(k, SolveStatus::Converged));
        }
    }
    Ok(tracker.finish(k, SolveStatus::MaxIters))
}

/// Proximal gradient iteration with a fixed stepsize and no linesearch.
///
/// Stops with [`SolveStatus::Diverged`] as soon as an iterate is not
/// stabilizing; the offending iterate is not evaluated or recorded.
pub fn solve_fixed_step(
    problem: &RegularizedProblem,
    k0: &Policy,
    eta: f64,
    eps_tol: f64,
    max_iters: usize,
    record_iterates: bool,
) -> Result<SolveReport> {
    positive_stepsize(eta)?;
    let plant = &problem.plant;
    require_stabilizing(plant, k0)?;
    let mut tracker = Tracker::new(record_iterates);
    let mut k = k0.clone();
    let mut eval = lqr::evaluate_policy(plant, &k)?;
    tracker.record(problem, 0, &k, eval.f, NO_STEP)?;
    for iter in 1..=max_iters {
        let gradient = lqr::policy_gradient(plant, &k, &eval)?;
        let next = prox_grad_step(&k, &gradient, eta, &problem.reg, problem.lambda())?;
        let next_eval = match lqr::evaluate_policy(plant, &next) {
            Ok(e) => e,
            Err(Error::Unstable { .. }) | Err(Error::Numerical(_)) => {
                return Ok(tracker.finish(k, SolveStatus::Diverged));
            }
            Err(e) => return Err(e),
        };
        let step_norm = (next.gain() - k.gain()).norm();
        k = next;
        eval = next_eval;
        tracker.record(
            problem,
            iter,
            &k,
            eval.f,
            StepInfo {
                stepsize: eta,
                grad_norm: gradient.norm(),
                step_norm,
            },
        )?;
        if step_norm <= eps_tol {
            return Ok(tracker.finish(k, SolveStatus::Converged));
        }
    }
    Ok(tracker.finish(k, SolveStatus::MaxIters))
}

/// Theoretical stepsize bounds at a stabilizing policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepsizeBounds {
    /// Keeps one proximal step inside the local smooth ball around `K`.
    pub local: f64,
    /// Iteration-independent bound over a stabilizing, descending sequence
    /// started at `K`.
    pub global: f64,
    /// Radius `ρ_K` of the local ball.
    pub radius: f64,
}

/// Local and global stepsize bounds for the Lasso, nuclear-norm and
/// squared-distance-to-reference penalties.
///
/// `K` plays the role of the starting policy in the global bound. Without a
/// stationary-point estimate the bound uses `K* ≈ 0`, i.e. `Δ = ‖K‖_F` and
/// `‖K*‖ = 0`. The starting cost level is the smooth cost `f(K)`, so the
/// global bound scales as `1/λ` once `λ` dominates the denominator.
pub fn stepsize_bound(
    problem: &RegularizedProblem,
    policy: &Policy,
    eval: &Evaluation,
    k_star_estimate: Option<&Policy>,
) -> Result<StepsizeBounds> {
    let plant = &problem.plant;
    let lambda = problem.lambda();
    let (n, m) = (plant.state_dim() as f64, plant.input_dim() as f64);
    match problem.reg {
        Regularizer::Lasso | Regularizer::Nuclear | Regularizer::FrobToRef(_) => {}
        ref other => {
            return Err(Error::Unsupported(format!(
                "no stepsize bound for the {} regularizer",
                other.name()
            )))
        }
    }
    require_stabilizing(plant, policy)?;

    let gradient = lqr::policy_gradient(plant, policy, eval)?;
    let grad_norm = linalg::spectral_norm(&gradient)?;
    let sigma0_min = linalg::sigma_min(plant.sigma0())?;
    let b_norm = linalg::spectral_norm(plant.b())?;
    let closed_norm = linalg::spectral_norm(&plant.closed_loop(policy))?;
    let sigma_norm = linalg::spectral_norm(&eval.sigma)?;
    let radius = sigma0_min / (4.0 * sigma_norm * (closed_norm + 1.0) * b_norm);

    let local = match &problem.reg {
        Regularizer::Lasso => radius / (grad_norm + lambda * n * m),
        Regularizer::Nuclear => radius / (grad_norm + lambda * n.min(m)),
        Regularizer::FrobToRef(k_ref) => {
            let dist = linalg::spectral_norm(&(policy.gain() - k_ref))?;
            radius / (2.0 * grad_norm + 2.0 * lambda * dist)
        }
        _ => unreachable!(),
    };

    let q_min = linalg::sigma_min(plant.q())?;
    if !(q_min > 0.0) {
        return Err(Error::InvalidArgument(
            "the global stepsize bound requires Q to be positive definite".into(),
        ));
    }
    let (delta, k_star_norm) = match k_star_estimate {
        Some(ks) => (
            (policy.gain() - ks.gain()).norm(),
            linalg::spectral_norm(ks.gain())?,
        ),
        None => (policy.gain().norm(), 0.0),
    };
    let f0 = eval.f;
    let a_norm = linalg::spectral_norm(plant.a())?;
    let r_norm = linalg::spectral_norm(plant.r())?;
    let p_bound = f0 / sigma0_min;
    let rho_f = 2.0 * f0 / q_min
        * (b_norm * p_bound * a_norm + (r_norm + b_norm * p_bound * b_norm) * (delta + k_star_norm));
    let rho_l = sigma0_min.powi(2) / (8.0 * f0 * b_norm);
    let global = match &problem.reg {
        Regularizer::Lasso => rho_l / (rho_f + lambda * n * m),
        Regularizer::Nuclear => rho_l / (rho_f + lambda * n.min(m)),
        Regularizer::FrobToRef(_) => rho_l / (2.0 * rho_f + 4.0 * lambda * delta),
        _ => unreachable!(),
    };
    Ok(StepsizeBounds { local, global, radius })
}
