//! Structured policy iteration for regularized discrete-time LQR.
//!
//! The crate solves `min_K f(K) + λ r(K)` over stabilizing feedback gains
//! `u = Kx`, where `f` is the infinite-horizon quadratic cost and `r` is a
//! structure-inducing regularizer (lasso, group lasso, nuclear norm, ...).
//! [`spi::solve`] runs proximal gradient steps with a backtracking linesearch
//! that keeps every iterate stabilizing; [`model_free::solve_model_free`]
//! replaces the exact gradient with a smoothed zeroth-order estimate.
//!
//! ```
//! use spi_core::{experiments::make_laplacian, RegularizedProblem, Regularizer, SpiConfig};
//!
//! let plant = make_laplacian(3).unwrap();
//! let (_, k_lqr) = plant.riccati().unwrap();
//! let problem = RegularizedProblem::new(plant, Regularizer::Lasso, 100.0).unwrap();
//! let report = spi_core::spi::solve(&problem, &k_lqr, &SpiConfig::default()).unwrap();
//! assert!(report.last().objective.is_finite());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod linalg;
pub mod lqr;
pub mod model_free;
pub mod regularizers;
pub mod spi;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use lqr::{Evaluation, Plant, Policy, RegularizedProblem};
pub use model_free::ModelFreeConfig;
pub use regularizers::{Groups, ProxWeight, Regularizer};
pub use spi::{IterationRecord, SolveReport, SolveStatus, SpiConfig};
