mod common;

use approx::assert_relative_eq;
use common::*;
use spi_core::experiments::make_laplacian;
use spi_core::linalg::{self, solve_dare, solve_discrete_lyapunov};
use spi_core::lqr::{cost, evaluate_policy, policy_gradient};
use spi_core::model_free::{estimate_gradient, rollout_cost, sample_sphere, sample_x0, TrajectorySample};
use spi_core::{Matrix, Policy};

#[test]
fn lyapunov_matches_truncated_series() {
    let mut rng = rng(11);
    for n in [1, 2, 3, 5, 8, 16, 17, 30] {
        let raw = gaussian_matrix(&mut rng, n, n);
        let m = &raw * (0.9 / linalg::spectral_radius(&raw).unwrap());
        let l = gaussian_matrix(&mut rng, n, n);
        let c = &l * l.transpose() + Matrix::identity(n, n);
        let x = solve_discrete_lyapunov(&m, &c).unwrap();
        let oracle = lyapunov_series(&m, &c);
        assert!((&x - &oracle).norm() <= 1e-9 * oracle.norm(), "n={n}");
    }
}

#[test]
fn riccati_matches_value_iteration_oracle() {
    for n in [1, 3, 20] {
        let plant = make_laplacian(n).unwrap();
        let (p, k) = solve_dare(plant.a(), plant.b(), plant.q(), plant.r()).unwrap();
        let (p_ref, k_ref) = riccati_oracle(plant.a(), plant.b(), plant.q(), plant.r());
        assert!((&p - &p_ref).norm() <= 1e-8 * p_ref.norm(), "n={n}");
        assert!((&k - &k_ref).norm() <= 1e-8, "n={n}");
    }
    let mut rng = rng(5);
    for _ in 0..10 {
        let plant = random_plant(&mut rng, 4, 2, 1.2);
        let (p, _) = solve_dare(plant.a(), plant.b(), plant.q(), plant.r()).unwrap();
        let (p_ref, _) = riccati_oracle(plant.a(), plant.b(), plant.q(), plant.r());
        assert!((&p - &p_ref).norm() <= 1e-8 * p_ref.norm());
    }
}

#[test]
fn riccati_value_for_laplacian_3() {
    let plant = make_laplacian(3).unwrap();
    let (p, k) = plant.riccati().unwrap();
    assert_relative_eq!(p.trace(), 770.579, epsilon = 5e-3);
    let expected = Matrix::from_row_slice(
        3,
        3,
        &[-0.2095, -0.1510, -0.0144, -0.1510, -0.2239, -0.1510, -0.0144, -0.1510, -0.2095],
    );
    assert!((k.gain() - expected).amax() < 1e-3);
}

#[test]
fn cost_matches_series_oracle() {
    let mut rng = rng(21);
    for _ in 0..20 {
        let plant = random_plant(&mut rng, 3, 2, 1.1);
        let k = stable_policy_near_lqr(&mut rng, &plant, 0.2);
        let f = cost(&plant, &k).unwrap();
        assert_relative_eq!(f, series_cost(&plant, k.gain()), max_relative = 1e-10);
    }
}

#[test]
fn evaluation_state_covariance_is_consistent() {
    // Tr(Σ₀P) equals Tr((Q + KᵀRK)Σ) for the pair of Lyapunov solutions.
    let mut rng = rng(8);
    for _ in 0..10 {
        let plant = random_plant(&mut rng, 4, 3, 1.05);
        let k = stable_policy_near_lqr(&mut rng, &plant, 0.1);
        let e = evaluate_policy(&plant, &k).unwrap();
        let c = plant.q() + k.gain().transpose() * plant.r() * k.gain();
        assert_relative_eq!(e.f, (c * &e.sigma).trace(), max_relative = 1e-9);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = rng(3);
    for _ in 0..20 {
        let plant = random_plant(&mut rng, 3, 3, 1.1);
        let k = stable_policy_near_lqr(&mut rng, &plant, 0.3);
        let e = evaluate_policy(&plant, &k).unwrap();
        let g = policy_gradient(&plant, &k, &e).unwrap();
        let fd = fd_gradient(&plant, k.gain(), 1e-5);
        assert!((&g - &fd).norm() <= 1e-4 * fd.norm().max(1e-8));
    }
}

#[test]
fn gradient_vanishes_at_riccati_gain() {
    let plant = make_laplacian(3).unwrap();
    let (_, k) = plant.riccati().unwrap();
    let e = evaluate_policy(&plant, &k).unwrap();
    assert!(policy_gradient(&plant, &k, &e).unwrap().norm() < 1e-6);
}

#[test]
fn rollout_average_matches_exact_cost() {
    let plant = make_laplacian(3).unwrap();
    let (_, k) = plant.riccati().unwrap();
    let f = cost(&plant, &k).unwrap();
    let mut rng = rng(99);
    let n = 10_000;
    let total: f64 = (0..n)
        .map(|_| {
            let x0 = sample_x0(3, &mut rng);
            rollout_cost(&plant, &k, &x0, 600).unwrap().cost
        })
        .sum();
    assert_relative_eq!(total / n as f64, f, max_relative = 0.02);
}

#[test]
fn rollout_cost_grows_with_horizon() {
    let plant = make_laplacian(3).unwrap();
    let k = Policy::new(plant.riccati().unwrap().1.gain() * 0.5).unwrap();
    let mut rng = rng(1);
    let x0 = sample_x0(3, &mut rng);
    let mut prev = 0.0;
    for h in 0..50 {
        let c = rollout_cost(&plant, &k, &x0, h).unwrap().cost;
        assert!(c >= prev);
        prev = c;
    }
}

#[test]
fn sphere_sample_mean_is_centered() {
    let mut rng = rng(17);
    let (m, n, r, draws) = (2, 3, 0.5, 100_000);
    let mut sum = Matrix::zeros(m, n);
    for _ in 0..draws {
        sum += sample_sphere(m, n, r, &mut rng).unwrap();
    }
    let mean = sum / draws as f64;
    let band = 5.0 * r / ((draws * n * m) as f64).sqrt();
    assert!(mean.amax() <= band, "{} > {band}", mean.amax());
}

#[test]
fn sphere_sample_is_isotropic() {
    let mut rng = rng(23);
    let (r, draws) = (0.3, 1_000_000);
    let mut acc = Matrix::zeros(2, 2);
    for _ in 0..draws {
        let u = sample_sphere(2, 2, r, &mut rng).unwrap();
        acc += &u * u.transpose();
    }
    // E[UUᵀ] = (r²/(nm))·n·I for U uniform on the 2×2 Frobenius sphere.
    let second = acc / (draws as f64 * r * r);
    let expected = Matrix::identity(2, 2) * 0.5;
    assert!((second - &expected).amax() <= 0.05 * 0.5);
}

#[test]
fn initial_state_covariance_is_identity() {
    let mut rng = rng(31);
    let draws = 1_000_000;
    let mut acc = Matrix::zeros(3, 3);
    for _ in 0..draws {
        let x = sample_x0(3, &mut rng);
        acc += &x * x.transpose();
    }
    let cov = acc / draws as f64;
    assert!((cov - Matrix::identity(3, 3)).amax() <= 0.02);
}

#[test]
fn smoothed_gradient_of_quadratic_is_unbiased() {
    let k = Matrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
    let r = 1.0;
    let mut rng = rng(41);
    let samples: Vec<TrajectorySample> = (0..1_000_000)
        .map(|_| {
            let u = sample_sphere(2, 2, r, &mut rng).unwrap();
            let c = (&k + &u).norm_squared();
            TrajectorySample {
                perturbation: u,
                cost: c,
                diverged: false,
            }
        })
        .collect();
    let g = estimate_gradient(&samples, r, 2, 2).unwrap();
    let expected = &k * 2.0;
    for (gi, ei) in g.iter().zip(expected.iter()) {
        assert!((gi - ei).abs() <= 0.02 * ei.abs(), "{gi} vs {ei}");
    }
}

#[test]
fn random_directions_have_no_preferred_sign() {
    let mut rng = rng(2);
    let pos = (0..10_000)
        .filter(|_| sample_sphere(1, 1, 1.0, &mut rng).unwrap()[(0, 0)] > 0.0)
        .count();
    assert!((4_700..5_300).contains(&pos));
}
