//! Dense matrix kernels: spectral radius, discrete Lyapunov and Riccati
//! solvers, and a sorted SVD.
//!
//! Everything here is a pure function over [`nalgebra::DMatrix`]. The
//! Lyapunov solver uses an exact Kronecker-vectorized linear solve for small
//! problems and the doubling (squared Smith) iteration above
//! [`KRONECKER_MAX_DIM`].

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Largest dimension for which the Lyapunov solver builds the `n² × n²`
/// Kronecker system.
pub const KRONECKER_MAX_DIM: usize = 16;

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

const LYAP_RTOL: f64 = 1e-10;
const LYAP_MAX_REFINE: usize = 4;
const DOUBLING_MAX_STEPS: usize = 64;

const DARE_RTOL: f64 = 1e-12;
const DARE_MAX_ITER: usize = 100_000;
const DARE_RESIDUAL_RTOL: f64 = 1e-9;

pub(crate) fn require_square(m: &Matrix, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m.nrows())
}

pub(crate) fn require_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} has non-finite entries")))
    }
}

/// Symmetric within `rtol` relative to the largest entry.
pub fn is_symmetric(m: &Matrix, rtol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rtol * scale {
                return false;
            }
        }
    }
    true
}

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    require_square(m, "symmetric matrix")?;
    let mut ev: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// `max |λᵢ(M)|` over the (possibly complex) spectrum of a square matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    require_square(m, "spectral radius input")?;
    require_finite(m, "spectral radius input")?;
    if m.is_empty() {
        return Ok(0.0);
    }
    let schur = Schur::try_new(m.clone(), SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Singular value decomposition with singular values sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        self.reconstruct_with(&self.singular_values)
    }

    /// `U · diag(values) · Vᵀ` for replacement singular values.
    pub fn reconstruct_with(&self, values: &[f64]) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    require_finite(m, "SVD input")?;
    let k = m.nrows().min(m.ncols());
    if k == 0 {
        return Ok(Svd {
            u: Matrix::zeros(m.nrows(), 0),
            singular_values: Vec::new(),
            v: Matrix::zeros(m.ncols(), 0),
        });
    }
    let dense = faer::Mat::<f64>::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)]);
    let dec = dense
        .thin_svd()
        .map_err(|_| Error::Numerical("SVD did not converge".into()))?;
    let (u, v, sv) = (dec.U(), dec.V(), dec.S().column_vector());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let su = Matrix::from_fn(m.nrows(), k, |i, j| u[(i, order[j])]);
    let sv_mat = Matrix::from_fn(m.ncols(), k, |i, j| v[(i, order[j])]);
    let values = order.iter().map(|&j| sv[j]).collect();
    Ok(Svd {
        u: su,
        singular_values: values,
        v: sv_mat,
    })
}

/// Induced 2-norm (largest singular value).
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.singular_values.first().copied().unwrap_or(0.0))
}

/// Smallest singular value.
pub fn sigma_min(m: &Matrix) -> Result<f64> {
    Ok(svd(m)?.singular_values.last().copied().unwrap_or(0.0))
}

/// Residual `MᵀXM − X + C` of the value-form Lyapunov equation.
pub fn lyapunov_residual(m: &Matrix, x: &Matrix, c: &Matrix) -> Matrix {
    m.transpose() * x * m - x + c
}

/// Solves `MᵀXM − X + C = 0` for symmetric `C`.
///
/// The covariance form `MΣMᵀ − Σ + Σ₀ = 0` is obtained by passing `Mᵀ`.
/// Fails with [`Error::Unstable`] when `ρ(M) >= 1`.
pub fn solve_discrete_lyapunov(m: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = require_square(m, "Lyapunov operator")?;
    if c.nrows() != n || c.ncols() != n {
        return Err(Error::Dimension(format!(
            "Lyapunov right-hand side is {}x{}, operator is {n}x{n}",
            c.nrows(),
            c.ncols()
        )));
    }
    require_finite(m, "Lyapunov operator")?;
    require_finite(c, "Lyapunov right-hand side")?;
    if !is_symmetric(c, 1e-12) {
        return Err(Error::InvalidArgument(
            "Lyapunov right-hand side must be symmetric".into(),
        ));
    }

    let small = n <= KRONECKER_MAX_DIM;
    if small {
        let radius = spectral_radius(m)?;
        if radius >= 1.0 {
            return Err(Error::Unstable { radius });
        }
    }
    let solve = |rhs: &Matrix| {
        if small {
            lyapunov_kronecker(m, rhs)
        } else {
            lyapunov_doubling(m, rhs)
        }
    };

    let mut x = symmetrize(&solve(c)?);
    for _ in 0..LYAP_MAX_REFINE {
        let res = lyapunov_residual(m, &x, c);
        if res.norm() <= LYAP_RTOL * x.norm().max(1.0) {
            return Ok(x);
        }
        let corr = solve(&symmetrize(&res))?;
        x = symmetrize(&(x + corr));
    }
    let res = lyapunov_residual(m, &x, c).norm();
    if res <= LYAP_RTOL * x.norm().max(1.0) {
        Ok(x)
    } else {
        Err(Error::Numerical(format!(
            "Lyapunov residual {res:.3e} above tolerance"
        )))
    }
}

/// `(I − Mᵀ⊗Mᵀ) vec(X) = vec(C)` with column-major `vec`.
fn lyapunov_kronecker(m: &Matrix, c: &Matrix) -> Result<Matrix> {
    let n = m.nrows();
    let mt = m.transpose();
    let mut sys = -mt.kronecker(&mt);
    for i in 0..n * n {
        sys[(i, i)] += 1.0;
    }
    let rhs = nalgebra::DVector::from_column_slice(c.as_slice());
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular Kronecker Lyapunov system".into()))?;
    Ok(Matrix::from_column_slice(n, n, sol.as_slice()))
}

/// Doubling iteration `X ← X + MₖᵀXMₖ`, `Mₖ₊₁ = Mₖ²`.
///
/// `‖Mₖ‖_F < 1` certifies `ρ(M) < 1`; the loop stops once the tail
/// `MₖᵀX∞Mₖ` is below rounding level.
fn lyapunov_doubling(m: &Matrix, c: &Matrix) -> Result<Matrix> {
    let mut x = c.clone();
    let mut mk = m.clone();
    for _ in 0..DOUBLING_MAX_STEPS {
        let norm = mk.norm();
        if norm <= 1e-9 {
            return Ok(x);
        }
        if !norm.is_finite() || norm > 1e100 {
            break;
        }
        let inc = mk.transpose() * &x * &mk;
        x += inc;
        mk = &mk * &mk;
    }
    let radius = spectral_radius(m)?;
    if radius >= 1.0 {
        Err(Error::Unstable { radius })
    } else {
        Err(Error::Numerical(format!(
            "doubling iteration did not converge (spectral radius {radius})"
        )))
    }
}

/// Solves the discrete algebraic Riccati equation by value iteration.
///
/// Returns `(P, K)` with `K = −(BᵀPB + R)⁻¹BᵀPA`.
pub fn solve_dare(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = require_square(a, "A")?;
    let m = require_square(r, "R")?;
    if b.nrows() != n || b.ncols() != m || q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "DARE expects A {n}x{n}, B {n}x{m}, Q {n}x{n}, R {m}x{m}; got B {}x{}, Q {}x{}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    for (mat, name) in [(a, "A"), (b, "B"), (q, "Q"), (r, "R")] {
        require_finite(mat, name)?;
    }

    let gain = |p: &Matrix| -> Result<(Matrix, Matrix)> {
        let pb = p * b;
        let s = r + b.transpose() * &pb;
        let chol = symmetrize(&s)
            .cholesky()
            .ok_or_else(|| Error::Numerical("R + BᵀPB is not positive definite".into()))?;
        let k = -chol.solve(&(pb.transpose() * a));
        Ok((k, pb))
    };

    let mut p = symmetrize(q);
    let mut converged = false;
    for _ in 0..DARE_MAX_ITER {
        let (k, pb) = gain(&p)?;
        // AᵀPA + Q + AᵀPB·K, where K already carries the minus sign.
        let next = symmetrize(&(a.transpose() * &p * a + q + a.transpose() * pb * k));
        if !next.iter().all(|v| v.is_finite()) {
            break;
        }
        let change = (&next - &p).norm();
        p = next;
        if change <= DARE_RTOL * p.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotStabilizable {
            iterations: DARE_MAX_ITER,
        });
    }

    let (k, _) = gain(&p)?;
    let closed = a + b * &k;
    let radius = spectral_radius(&closed)?;
    if radius >= 1.0 {
        return Err(Error::NotStabilizable {
            iterations: DARE_MAX_ITER,
        });
    }
    let residual = dare_residual(a, b, q, r, &p)?.norm();
    if residual > DARE_RESIDUAL_RTOL * p.norm().max(1.0) {
        return Err(Error::Numerical(format!(
            "DARE residual {residual:.3e} above tolerance"
        )));
    }
    Ok((p, k))
}

/// `AᵀPA + Q − AᵀPB(BᵀPB + R)⁻¹BᵀPA − P`.
pub fn dare_residual(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix, p: &Matrix) -> Result<Matrix> {
    let s = r + b.transpose() * p * b;
    let bpa = b.transpose() * p * a;
    let x = s
        .lu()
        .solve(&bpa)
        .ok_or_else(|| Error::Numerical("singular R + BᵀPB".into()))?;
    Ok(a.transpose() * p * a + q - bpa.transpose() * x - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn laplacian_a(n: usize) -> Matrix {
        Matrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => 1.1,
            1 => 0.1,
            _ => 0.0,
        })
    }

    #[test]
    fn spectral_radius_examples() {
        assert_relative_eq!(spectral_radius(&Matrix::identity(3, 3)).unwrap(), 1.0, epsilon = 1e-12);
        let nil = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil).unwrap() < 1e-12);
        let m = Matrix::from_row_slice(2, 2, &[1.1, 0.1, 0.1, 1.1]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 1.2, max_relative = 1e-8);
    }

    #[test]
    fn spectral_radius_sees_complex_pairs() {
        // rotation scaled by 0.9: eigenvalues 0.9·e^{±iθ}
        let (c, s) = (0.9 * 0.3f64.cos(), 0.9 * 0.3f64.sin());
        let m = Matrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert_relative_eq!(spectral_radius(&m).unwrap(), 0.9, max_relative = 1e-10);
    }

    #[test]
    fn spectral_radius_rejects_rectangular() {
        assert!(matches!(
            spectral_radius(&Matrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn lyapunov_zero_operator_returns_rhs() {
        let q = Matrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let x = solve_discrete_lyapunov(&Matrix::zeros(3, 3), &q).unwrap();
        assert_relative_eq!(x, q, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_scalar_geometric_series() {
        let x = solve_discrete_lyapunov(&Matrix::from_element(1, 1, 0.5), &Matrix::from_element(1, 1, 1.0))
            .unwrap();
        assert_relative_eq!(x[(0, 0)], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn lyapunov_unstable_operator_errors() {
        let m = Matrix::from_row_slice(2, 2, &[1.1, 0.1, 0.1, 1.1]);
        let err = solve_discrete_lyapunov(&m, &Matrix::identity(2, 2)).unwrap_err();
        match err {
            Error::Unstable { radius } => assert_relative_eq!(radius, 1.2, max_relative = 1e-8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lyapunov_doubling_path_matches_kronecker() {
        // Above the Kronecker cut-off the doubling route is taken.
        let n = KRONECKER_MAX_DIM + 4;
        let m = laplacian_a(n) * 0.7;
        let c = Matrix::identity(n, n);
        let x = solve_discrete_lyapunov(&m, &c).unwrap();
        let xk = lyapunov_kronecker(&m, &c).unwrap();
        assert!((&x - &xk).norm() <= 1e-9 * xk.norm());
        assert!(lyapunov_residual(&m, &x, &c).norm() <= 1e-10 * x.norm());

        let unstable = laplacian_a(n);
        assert!(matches!(
            solve_discrete_lyapunov(&unstable, &c),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn lyapunov_rejects_asymmetric_rhs() {
        let c = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(solve_discrete_lyapunov(&Matrix::zeros(2, 2), &c).is_err());
    }

    #[test]
    fn dare_with_zero_dynamics() {
        let b = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let q = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let r = Matrix::from_element(1, 1, 0.5);
        let (p, k) = solve_dare(&Matrix::zeros(2, 2), &b, &q, &r).unwrap();
        assert_relative_eq!(p, q, epsilon = 1e-14);
        assert!(k.amax() < 1e-14);
    }

    #[test]
    fn dare_scalar_matches_fixed_point_iteration() {
        // Independent scalar recursion p ← a²p + q − a²p²b²/(b²p + r).
        let (a, b, q, r) = (1.1, 1.0, 1.0, 1000.0);
        let mut p: f64 = q;
        for _ in 0..1_000_000 {
            let next = a * a * p + q - (a * p * b).powi(2) / (b * b * p + r);
            if (next - p).abs() <= 1e-15 * next {
                p = next;
                break;
            }
            p = next;
        }
        let k = -(b * p * a) / (b * b * p + r);
        let one = |v| Matrix::from_element(1, 1, v);
        let (pm, km) = solve_dare(&one(a), &one(b), &one(q), &one(r)).unwrap();
        assert_relative_eq!(pm[(0, 0)], p, max_relative = 1e-9);
        assert_relative_eq!(km[(0, 0)], k, max_relative = 1e-9);
    }

    #[test]
    fn dare_laplacian_is_stabilizing() {
        let n = 3;
        let (p, k) = solve_dare(
            &laplacian_a(n),
            &Matrix::identity(n, n),
            &Matrix::identity(n, n),
            &(Matrix::identity(n, n) * 1000.0),
        )
        .unwrap();
        let closed = laplacian_a(n) + &k;
        assert!(spectral_radius(&closed).unwrap() < 1.0);
        // Closed-loop Lyapunov consistency.
        let c = Matrix::identity(n, n) + k.transpose() * 1000.0 * &k;
        let x = solve_discrete_lyapunov(&closed, &c).unwrap();
        assert!((&x - &p).norm() <= 1e-8 * p.norm());
    }

    #[test]
    fn dare_uncontrollable_unstable_mode_fails() {
        let a = Matrix::from_row_slice(2, 2, &[1.5, 0.0, 0.0, 0.5]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let err = solve_dare(&a, &b, &Matrix::identity(2, 2), &Matrix::identity(1, 1)).unwrap_err();
        assert!(matches!(err, Error::NotStabilizable { .. }));
    }

    #[test]
    fn svd_examples() {
        let d = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 3.0]));
        let s = svd(&d).unwrap();
        assert_relative_eq!(s.singular_values[0], 3.0, epsilon = 1e-14);
        assert_relative_eq!(s.singular_values[1], 1.0, epsilon = 1e-14);
        let z = svd(&Matrix::zeros(2, 3)).unwrap();
        assert!(z.singular_values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn svd_reconstructs_rectangular() {
        let m = Matrix::from_fn(4, 3, |i, j| ((i * 7 + j * 5) % 11) as f64 / 3.0 - 1.5);
        let s = svd(&m).unwrap();
        assert!((s.reconstruct() - &m).norm() <= 1e-10 * m.norm());
        let k = 3;
        assert!((s.u.transpose() * &s.u - Matrix::identity(k, k)).norm() < 1e-10);
        assert!((s.v.transpose() * &s.v - Matrix::identity(k, k)).norm() < 1e-10);
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_rank_one_wide_matrix() {
        let bits: [u64; 6] = [
            13806972813117831073,
            13805032609690800465,
            4582816019899095728,
            4581067492241239252,
            13822385360112809574,
            13820614054986234902,
        ];
        let m = Matrix::from_iterator(2, 3, bits.iter().map(|b| f64::from_bits(*b)));
        let s = svd(&m).unwrap();
        assert_relative_eq!(s.singular_values[0], m.norm(), max_relative = 1e-12);
        assert!(s.singular_values[1] < 1e-12);
        assert!((s.reconstruct() - &m).norm() <= 1e-12);
    }
}
