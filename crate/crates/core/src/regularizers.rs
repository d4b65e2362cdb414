//! Structure-inducing penalties and their closed-form proximal operators.
//!
//! Every operator computes
//! `argmin_K r(K) + 1/(2w)·‖K − G‖_F²` for a weight `w = λη`.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Disjoint groups of entry indices into a policy matrix.
///
/// Indices are row-major (`i * cols + j`). Entries not covered by any group
/// are left unpenalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups(Vec<Vec<usize>>);

impl Groups {
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for g in &groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty group".into()));
            }
            for &idx in g {
                if !seen.insert(idx) {
                    return Err(Error::InvalidArgument(format!(
                        "entry {idx} belongs to more than one group"
                    )));
                }
            }
        }
        Ok(Self(groups))
    }

    /// One group per row of a `rows × cols` matrix.
    pub fn rows(rows: usize, cols: usize) -> Self {
        Self((0..rows).map(|i| (i * cols..(i + 1) * cols).collect()).collect())
    }

    /// One group per column of a `rows × cols` matrix.
    pub fn cols(rows: usize, cols: usize) -> Self {
        Self((0..cols).map(|j| (0..rows).map(|i| i * cols + j).collect()).collect())
    }

    pub fn as_slice(&self) -> &[Vec<usize>] {
        &self.0
    }

    fn check(&self, k: &Matrix) -> Result<()> {
        let len = k.len();
        match self.0.iter().flatten().find(|&&idx| idx >= len) {
            Some(idx) => Err(Error::Dimension(format!(
                "group index {idx} out of range for a {}x{} policy",
                k.nrows(),
                k.ncols()
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    /// `‖K‖₁`
    Lasso,
    /// `Σ_g ‖K_g‖₂`
    GroupLasso(Groups),
    /// `Σᵢ σᵢ(K)`
    Nuclear,
    /// `l1·‖K‖₁ + (l2/2)·‖K‖_F²`
    ElasticNet { l1: f64, l2: f64 },
    /// `‖K − K_ref‖_F²`
    FrobToRef(Matrix),
    /// Indicator of `K ≥ 0` entrywise.
    Nonnegative,
    /// Indicator of the probability simplex over the flattened entries.
    Simplex,
}

/// Proximal weight `w = λ·η`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ProxWeight(f64);

impl ProxWeight {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::InvalidArgument(format!(
                "prox weight must be finite and nonnegative, got {value}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

const CONSTRAINT_TOL: f64 = 1e-9;
const SIMPLEX_TOL: f64 = 1e-12;

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::Lasso => "lasso",
            Regularizer::GroupLasso(_) => "group_lasso",
            Regularizer::Nuclear => "nuclear",
            Regularizer::ElasticNet { .. } => "elastic_net",
            Regularizer::FrobToRef(_) => "frob_to_ref",
            Regularizer::Nonnegative => "nonnegative",
            Regularizer::Simplex => "simplex",
        }
    }

    /// Constraint variants (indicator functions) have no smooth penalty scale.
    pub fn is_constraint(&self) -> bool {
        matches!(self, Regularizer::Nonnegative | Regularizer::Simplex)
    }

    /// Checks embedded data (reference policy, groups, weights) against a
    /// policy of the given shape.
    pub fn validate_for(&self, k: &Matrix) -> Result<()> {
        match self {
            Regularizer::GroupLasso(groups) => groups.check(k),
            Regularizer::FrobToRef(k_ref) if k_ref.shape() != k.shape() => {
                Err(Error::Dimension(format!(
                    "reference policy is {}x{}, policy is {}x{}",
                    k_ref.nrows(),
                    k_ref.ncols(),
                    k.nrows(),
                    k.ncols()
                )))
            }
            Regularizer::ElasticNet { l1, l2 }
                if !(l1.is_finite() && l2.is_finite() && *l1 >= 0.0 && *l2 >= 0.0) =>
            {
                Err(Error::InvalidArgument(format!(
                    "elastic net weights must be nonnegative, got ({l1}, {l2})"
                )))
            }
            _ => Ok(()),
        }
    }

    /// `r(K)`. Constraint variants return `0` when satisfied and `+∞`
    /// otherwise.
    pub fn penalty(&self, k: &Matrix) -> Result<f64> {
        self.validate_for(k)?;
        Ok(match self {
            Regularizer::Lasso => k.iter().map(|v| v.abs()).sum(),
            Regularizer::GroupLasso(groups) => groups
                .as_slice()
                .iter()
                .map(|g| g.iter().map(|&i| entry(k, i).powi(2)).sum::<f64>().sqrt())
                .sum(),
            Regularizer::Nuclear => linalg::svd(k)?.singular_values.iter().sum(),
            Regularizer::ElasticNet { l1, l2 } => {
                l1 * k.iter().map(|v| v.abs()).sum::<f64>() + 0.5 * l2 * k.norm_squared()
            }
            Regularizer::FrobToRef(k_ref) => (k - k_ref).norm_squared(),
            Regularizer::Nonnegative => {
                if k.iter().all(|&v| v >= -CONSTRAINT_TOL) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Regularizer::Simplex => {
                let sum: f64 = k.iter().sum();
                if k.iter().all(|&v| v >= -CONSTRAINT_TOL) && (sum - 1.0).abs() <= CONSTRAINT_TOL {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        })
    }

    /// Proximal operator `argmin_K r(K) + 1/(2w)‖K − G‖_F²`.
    pub fn prox(&self, g: &Matrix, w: ProxWeight) -> Result<Matrix> {
        self.validate_for(g)?;
        linalg::require_finite(g, "prox input")?;
        let w = w.value();
        Ok(match self {
            Regularizer::Lasso => soft_threshold(g, w),
            Regularizer::GroupLasso(groups) => {
                let mut out = g.clone();
                for grp in groups.as_slice() {
                    let norm = grp.iter().map(|&i| entry(g, i).powi(2)).sum::<f64>().sqrt();
                    let scale = if norm > 0.0 { (1.0 - w / norm).max(0.0) } else { 0.0 };
                    for &i in grp {
                        *entry_mut(&mut out, i) = scale * entry(g, i);
                    }
                }
                out
            }
            Regularizer::Nuclear => {
                let dec = linalg::svd(g)?;
                let shrunk: Vec<f64> = dec.singular_values.iter().map(|s| (s - w).max(0.0)).collect();
                dec.reconstruct_with(&shrunk)
            }
            Regularizer::ElasticNet { l1, l2 } => {
                let denom = l2 * w + 1.0;
                g.map(|v| v.signum() * (v.abs() / denom - l1 * w / denom).max(0.0))
            }
            Regularizer::FrobToRef(k_ref) => (k_ref * (2.0 * w) + g) / (2.0 * w + 1.0),
            Regularizer::Nonnegative => g.map(|v| v.max(0.0)),
            Regularizer::Simplex => project_simplex(g)?,
        })
    }
}

/// Entrywise `sign(g)(|g| − t)₊`.
pub fn soft_threshold(g: &Matrix, t: f64) -> Matrix {
    g.map(|v| v.signum() * (v.abs() - t).max(0.0))
}

fn entry(k: &Matrix, flat: usize) -> f64 {
    k[(flat / k.ncols(), flat % k.ncols())]
}

fn entry_mut(k: &mut Matrix, flat: usize) -> &mut f64 {
    let c = k.ncols();
    &mut k[(flat / c, flat % c)]
}

/// Euclidean projection of the flattened entries onto the probability
/// simplex: `(gᵢ − θ)₊` with the shift `θ = wν` found by bisection so the
/// entries sum to one.
fn project_simplex(g: &Matrix) -> Result<Matrix> {
    let sum_at = |theta: f64| g.iter().map(|&v| (v - theta).max(0.0)).sum::<f64>();
    let max = g.max();
    // Every entry exceeds the lower end by at least 2, so the sum is > 1.
    let mut lo = g.min() - 2.0;
    let mut hi = max;
    if !(sum_at(lo) >= 1.0 && sum_at(hi) <= 1.0) {
        return Err(Error::Numerical("simplex bisection failed to bracket".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= SIMPLEX_TOL * max.abs().max(1.0) {
            break;
        }
    }
    // Exact shift on the identified support.
    let theta = 0.5 * (lo + hi);
    let support: Vec<f64> = g.iter().copied().filter(|&v| v > theta).collect();
    let theta = if support.is_empty() {
        theta
    } else {
        (support.iter().sum::<f64>() - 1.0) / support.len() as f64
    };
    let out = g.map(|v| (v - theta).max(0.0));
    if (out.sum() - 1.0).abs() > 1e-10 {
        return Err(Error::Numerical("simplex projection lost the sum constraint".into()));
    }
    Ok(out)
}
