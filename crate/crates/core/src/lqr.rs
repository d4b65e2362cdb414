//! LQR problem data, policy evaluation and the exact policy gradient.
//!
//! For a linear policy `u = Kx` the infinite-horizon cost is
//! `f(K) = Tr(Σ₀P)` where `P` solves the closed-loop value Lyapunov equation.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::regularizers::Regularizer;

/// Relative symmetry tolerance for `Q`, `R`, `Σ₀`.
const SYM_RTOL: f64 = 1e-12;
/// Numerical PSD slack relative to the largest eigenvalue.
const PSD_RTOL: f64 = 1e-10;

/// A discrete-time LQR instance `x⁺ = Ax + Bu` with stage cost
/// `xᵀQx + uᵀRu` and initial-state covariance `Σ₀ = E[x₀x₀ᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    a: Matrix,
    b: Matrix,
    q: Matrix,
    r: Matrix,
    sigma0: Matrix,
}

impl Plant {
    pub fn new(a: Matrix, b: Matrix, q: Matrix, r: Matrix, sigma0: Matrix) -> Result<Self> {
        let n = linalg::require_square(&a, "A")?;
        let m = b.ncols();
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.nrows())));
        }
        if n == 0 || m == 0 {
            return Err(Error::Dimension("state and input dimensions must be positive".into()));
        }
        for (mat, name, dim) in [(&q, "Q", n), (&r, "R", m), (&sigma0, "Sigma0", n)] {
            if mat.shape() != (dim, dim) {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {dim}x{dim}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        for (mat, name) in [(&a, "A"), (&b, "B"), (&q, "Q"), (&r, "R"), (&sigma0, "Sigma0")] {
            linalg::require_finite(mat, name)?;
        }
        check_psd(&q, "Q", false)?;
        check_psd(&r, "R", true)?;
        check_psd(&sigma0, "Sigma0", true)?;
        Ok(Self { a, b, q, r, sigma0 })
    }

    /// Plant with the default initial covariance `Σ₀ = I`.
    pub fn with_identity_covariance(a: Matrix, b: Matrix, q: Matrix, r: Matrix) -> Result<Self> {
        let n = a.nrows();
        Self::new(a, b, q, r, Matrix::identity(n, n))
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b(&self) -> &Matrix {
        &self.b
    }
    pub fn q(&self) -> &Matrix {
        &self.q
    }
    pub fn r(&self) -> &Matrix {
        &self.r
    }
    pub fn sigma0(&self) -> &Matrix {
        &self.sigma0
    }
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn closed_loop(&self, policy: &Policy) -> Matrix {
        &self.a + &self.b * policy.gain()
    }

    /// Riccati solution `(P, K_lqr)` of the unregularized problem.
    pub fn riccati(&self) -> Result<(Matrix, Policy)> {
        let (p, k) = linalg::solve_dare(&self.a, &self.b, &self.q, &self.r)?;
        Ok((p, Policy::new(k)?))
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        let want = (self.input_dim(), self.state_dim());
        if policy.gain().shape() != want {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, plant expects {}x{}",
                policy.gain().nrows(),
                policy.gain().ncols(),
                want.0,
                want.1
            )));
        }
        Ok(())
    }
}

fn check_psd(m: &Matrix, name: &str, definite: bool) -> Result<()> {
    if !linalg::is_symmetric(m, SYM_RTOL) {
        return Err(Error::InvalidArgument(format!("{name} must be symmetric")));
    }
    let ev = linalg::symmetric_eigenvalues(m)?;
    let (lo, hi) = (ev[0], *ev.last().unwrap());
    let ok = if definite {
        lo > 0.0
    } else {
        lo >= -PSD_RTOL * hi.abs().max(f64::MIN_POSITIVE)
    };
    if ok {
        Ok(())
    } else {
        let kind = if definite { "positive definite" } else { "positive semidefinite" };
        Err(Error::InvalidArgument(format!(
            "{name} must be {kind} (smallest eigenvalue {lo:e})"
        )))
    }
}

/// A linear state-feedback gain `u = Kx`, `K ∈ R^{m×n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy(Matrix);

impl Policy {
    pub fn new(gain: Matrix) -> Result<Self> {
        linalg::require_finite(&gain, "policy")?;
        Ok(Self(gain))
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self(Matrix::zeros(m, n))
    }

    pub fn gain(&self) -> &Matrix {
        &self.0
    }

    pub fn into_gain(self) -> Matrix {
        self.0
    }

    /// Number of entries with magnitude above `threshold`.
    pub fn cardinality(&self, threshold: f64) -> usize {
        self.0.iter().filter(|v| v.abs() > threshold).count()
    }
}

/// Value matrix `P`, aggregate state covariance `Σ`, and cost `f = Tr(Σ₀P)`
/// of a stabilizing policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub p: Matrix,
    pub sigma: Matrix,
    pub f: f64,
}

/// `F(K) = f(K) + λ·r(K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedProblem {
    pub plant: Plant,
    pub reg: Regularizer,
    lambda: f64,
}

impl RegularizedProblem {
    pub fn new(plant: Plant, reg: Regularizer, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        reg.validate_for(&Matrix::zeros(plant.input_dim(), plant.state_dim()))?;
        Ok(Self { plant, reg, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `λ·r(K)`, with `0·∞ = ∞` for violated constraints.
    pub fn weighted_penalty(&self, policy: &Policy) -> Result<f64> {
        let r = self.reg.penalty(policy.gain())?;
        Ok(if r.is_infinite() { r } else { self.lambda * r })
    }
}

pub fn is_stabilizing(plant: &Plant, policy: &Policy) -> Result<bool> {
    plant.check_policy(policy)?;
    Ok(linalg::spectral_radius(&plant.closed_loop(policy))? < 1.0)
}

/// Value matrix `P` alone: `(A+BK)ᵀP(A+BK) − P + Q + KᵀRK = 0`.
pub fn value_matrix(plant: &Plant, policy: &Policy) -> Result<Matrix> {
    plant.check_policy(policy)?;
    let k = policy.gain();
    let closed = plant.closed_loop(policy);
    let stage = linalg::symmetrize(&(&plant.q + k.transpose() * &plant.r * k));
    linalg::solve_discrete_lyapunov(&closed, &stage)
}

/// `f(K) = Tr(Σ₀P)` from a single Lyapunov solve.
pub fn cost(plant: &Plant, policy: &Policy) -> Result<f64> {
    Ok(trace_product(&plant.sigma0, &value_matrix(plant, policy)?))
}

pub(crate) fn trace_product(a: &Matrix, b: &Matrix) -> f64 {
    // Tr(AB) = Σ A_ij B_ji
    a.component_mul(&b.transpose()).sum()
}

pub fn evaluate_policy(plant: &Plant, policy: &Policy) -> Result<Evaluation> {
    let p = value_matrix(plant, policy)?;
    evaluate_with_value(plant, policy, p)
}

/// Completes an evaluation when `P` is already known.
pub(crate) fn evaluate_with_value(plant: &Plant, policy: &Policy, p: Matrix) -> Result<Evaluation> {
    let closed = plant.closed_loop(policy);
    let sigma = linalg::solve_discrete_lyapunov(&closed.transpose(), &plant.sigma0)?;
    let f = trace_product(&plant.sigma0, &p);
    Ok(Evaluation { p, sigma, f })
}

/// `∇f(K) = 2((R + BᵀPB)K + BᵀPA)Σ`.
pub fn policy_gradient(plant: &Plant, policy: &Policy, eval: &Evaluation) -> Result<Matrix> {
    plant.check_policy(policy)?;
    let n = plant.state_dim();
    if eval.p.shape() != (n, n) || eval.sigma.shape() != (n, n) {
        return Err(Error::Dimension("evaluation does not match the plant".into()));
    }
    let bt_p = plant.b.transpose() * &eval.p;
    let curvature = &plant.r + &bt_p * &plant.b;
    Ok((curvature * policy.gain() + bt_p * &plant.a) * &eval.sigma * 2.0)
}

/// `F(K) = f(K) + λ·r(K)`.
pub fn objective(problem: &RegularizedProblem, policy: &Policy) -> Result<f64> {
    let f = cost(&problem.plant, policy)?;
    Ok(f + problem.weighted_penalty(policy)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eye(n: usize) -> Matrix {
        Matrix::identity(n, n)
    }

    fn zero_dynamics() -> Plant {
        Plant::with_identity_covariance(Matrix::zeros(2, 2), eye(2), eye(2), eye(2)).unwrap()
    }

    #[test]
    fn plant_validation() {
        let bad_r = Plant::with_identity_covariance(eye(2), eye(2), eye(2), Matrix::zeros(2, 2));
        assert!(matches!(bad_r, Err(Error::InvalidArgument(_))));
        let bad_dim = Plant::with_identity_covariance(eye(2), Matrix::zeros(3, 1), eye(2), eye(1));
        assert!(matches!(bad_dim, Err(Error::Dimension(_))));
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Plant::with_identity_covariance(eye(2), eye(2), asym, eye(2)).is_err());
        let bad_sigma = Plant::new(eye(2), eye(2), eye(2), eye(2), Matrix::zeros(2, 2));
        assert!(bad_sigma.is_err());
    }

    #[test]
    fn stabilizing_zero_dynamics() {
        assert!(is_stabilizing(&zero_dynamics(), &Policy::zeros(2, 2)).unwrap());
    }

    #[test]
    fn evaluation_with_zero_closed_loop() {
        let plant = zero_dynamics();
        let policy = Policy::zeros(2, 2);
        let ev = evaluate_policy(&plant, &policy).unwrap();
        assert_relative_eq!(ev.p, eye(2), epsilon = 1e-14);
        assert_relative_eq!(ev.sigma, eye(2), epsilon = 1e-14);
        assert_relative_eq!(ev.f, 2.0, epsilon = 1e-14);
        let g = policy_gradient(&plant, &policy, &ev).unwrap();
        assert_eq!(g, Matrix::zeros(2, 2));
    }

    #[test]
    fn objective_adds_weighted_penalty() {
        let plant = zero_dynamics();
        let k = Policy::new(Matrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.0, 0.25])).unwrap();
        let f = cost(&plant, &k).unwrap();
        let none = RegularizedProblem::new(plant.clone(), Regularizer::Lasso, 0.0).unwrap();
        assert_eq!(objective(&none, &k).unwrap(), f);
        let lasso = RegularizedProblem::new(plant, Regularizer::Lasso, 2.0).unwrap();
        assert_relative_eq!(objective(&lasso, &k).unwrap(), f + 1.5, epsilon = 1e-12);
    }

    #[test]
    fn constraint_violation_gives_infinite_objective() {
        let problem = RegularizedProblem::new(zero_dynamics(), Regularizer::Nonnegative, 0.0).unwrap();
        let k = Policy::new(Matrix::from_row_slice(2, 2, &[-0.1, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(objective(&problem, &k).unwrap(), f64::INFINITY);
    }

    #[test]
    fn unstable_policy_is_an_error() {
        let a = Matrix::from_row_slice(1, 1, &[1.5]);
        let plant = Plant::with_identity_covariance(a, eye(1), eye(1), eye(1)).unwrap();
        assert!(matches!(
            evaluate_policy(&plant, &Policy::zeros(1, 1)),
            Err(Error::Unstable { .. })
        ));
        assert!(!is_stabilizing(&plant, &Policy::zeros(1, 1)).unwrap());
    }

    #[test]
    fn policy_shape_is_checked() {
        assert!(matches!(
            evaluate_policy(&zero_dynamics(), &Policy::zeros(3, 2)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn negative_lambda_rejected() {
        assert!(RegularizedProblem::new(zero_dynamics(), Regularizer::Lasso, -1.0).is_err());
    }
}
