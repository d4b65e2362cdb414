//! Criterion benchmarks for the solver building blocks.

use criterion::{BenchmarkId, Criterion};
use spi_core::experiments::make_laplacian;
use spi_core::linalg::solve_discrete_lyapunov;
use spi_core::{spi, Matrix, ProxWeight, RegularizedProblem, Regularizer, SpiConfig};

pub fn lyapunov(c: &mut Criterion) {
    let mut group = c.benchmark_group("lyapunov");
    for n in [8, 16, 32, 64] {
        let plant = make_laplacian(n).unwrap();
        let (_, k) = plant.riccati().unwrap();
        let closed = plant.closed_loop(&k);
        let rhs = Matrix::identity(n, n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_discrete_lyapunov(&closed, &rhs).unwrap())
        });
    }
    group.finish();
}

pub fn prox(c: &mut Criterion) {
    let g = Matrix::from_fn(20, 20, |i, j| ((i * 31 + j * 17) % 13) as f64 - 6.0);
    let w = ProxWeight::new(0.5).unwrap();
    let mut group = c.benchmark_group("prox");
    for reg in [Regularizer::Lasso, Regularizer::Nuclear, Regularizer::Simplex] {
        group.bench_function(reg.name(), |b| b.iter(|| reg.prox(&g, w).unwrap()));
    }
    group.finish();
}

pub fn solve(c: &mut Criterion) {
    let plant = make_laplacian(10).unwrap();
    let (_, k_lqr) = plant.riccati().unwrap();
    let problem = RegularizedProblem::new(plant, Regularizer::Lasso, 100.0).unwrap();
    let config = SpiConfig::default();
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("laplacian10_lasso", |b| {
        b.iter(|| spi::solve(&problem, &k_lqr, &config).unwrap())
    });
    group.finish();
}

pub fn benchmarks(c: &mut Criterion) {
    lyapunov(c);
    prox(c);
    solve(c);
}
