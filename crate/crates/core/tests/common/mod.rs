#![allow(dead_code)]

//! Independent reference computations used to check the library.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spi_core::{linalg, Matrix, Plant, Policy};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_matrix(rng: &mut impl Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// `Σ_k (Mᵀ)^k C M^k`, summed until the terms stop contributing.
pub fn lyapunov_series(m: &Matrix, c: &Matrix) -> Matrix {
    let mut x = c.clone();
    let mut term = c.clone();
    for _ in 0..1_000_000 {
        term = m.transpose() * &term * m;
        x += &term;
        if term.norm() <= 1e-17 * x.norm() {
            break;
        }
    }
    x
}

/// `Tr(Σ₀ P_K)` via the truncated series.
pub fn series_cost(plant: &Plant, k: &Matrix) -> f64 {
    let m = plant.a() + plant.b() * k;
    let c = plant.q() + k.transpose() * plant.r() * k;
    (plant.sigma0() * lyapunov_series(&m, &c)).trace()
}

/// Riccati value iteration with explicit inverses.
pub fn riccati_oracle(a: &Matrix, b: &Matrix, q: &Matrix, r: &Matrix) -> (Matrix, Matrix) {
    let mut p = q.clone();
    for _ in 0..1_000_000 {
        let s = (r + b.transpose() * &p * b).try_inverse().expect("invertible");
        let next = q + a.transpose() * &p * a - a.transpose() * &p * b * &s * b.transpose() * &p * a;
        let diff = (&next - &p).norm();
        p = next;
        if diff <= 1e-14 * p.norm() {
            break;
        }
    }
    let s = (r + b.transpose() * &p * b).try_inverse().expect("invertible");
    let k = -(s * b.transpose() * &p * a);
    (p, k)
}

/// Central finite differences of the series cost.
pub fn fd_gradient(plant: &Plant, k: &Matrix, h: f64) -> Matrix {
    let mut g = Matrix::zeros(k.nrows(), k.ncols());
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let mut kp = k.clone();
            let mut km = k.clone();
            kp[(i, j)] += h;
            km[(i, j)] -= h;
            g[(i, j)] = (series_cost(plant, &kp) - series_cost(plant, &km)) / (2.0 * h);
        }
    }
    g
}

/// Random plant with open-loop spectral radius `rho`.
pub fn random_plant(rng: &mut impl Rng, n: usize, m: usize, rho: f64) -> Plant {
    let raw = gaussian_matrix(rng, n, n);
    let scale = linalg::spectral_radius(&raw).unwrap().max(1e-3);
    let a = raw * (rho / scale);
    let b = gaussian_matrix(rng, n, m);
    let lq = gaussian_matrix(rng, n, n) * 0.3;
    let q = Matrix::identity(n, n) + &lq * lq.transpose();
    let r = Matrix::identity(m, m) * rng.random_range(0.5..5.0);
    let ls = gaussian_matrix(rng, n, n) * 0.3;
    let sigma0 = Matrix::identity(n, n) + &ls * ls.transpose();
    Plant::new(a, b, q, r, sigma0).unwrap()
}

/// Stabilizing policy near the Riccati gain: `K_lqr` plus a perturbation
/// that is halved until the closed loop is stable.
pub fn stable_policy_near_lqr(rng: &mut impl Rng, plant: &Plant, scale: f64) -> Policy {
    let (_, k_lqr) = plant.riccati().unwrap();
    let mut delta = gaussian_matrix(rng, plant.input_dim(), plant.state_dim()) * scale;
    loop {
        let k = Policy::new(k_lqr.gain() + &delta).unwrap();
        let rho = linalg::spectral_radius(&plant.closed_loop(&k)).unwrap();
        if rho < 0.99 {
            return k;
        }
        delta *= 0.5;
    }
}

/// Least-squares slope and R² of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, r2)
}

/// Derivative-free compass search on `obj` starting at `x0`. Each sweep
/// tries `±step` along every coordinate and along the pairwise directions
/// `e_i − e_j`, which keep coordinate sums fixed.
pub fn compass_search(obj: &dyn Fn(&Matrix) -> f64, x0: &Matrix, step0: f64) -> Matrix {
    let mut x = x0.clone();
    let mut fx = obj(&x);
    let len = x.len();
    let mut step = step0;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..len {
            for j in 0..=len {
                for sign in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[i] += sign * step;
                    if j < len {
                        if j == i {
                            continue;
                        }
                        y[j] -= sign * step;
                    }
                    let fy = obj(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    x
}
