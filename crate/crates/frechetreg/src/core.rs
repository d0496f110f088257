//! Shared domain types: the probability grid, quantile and covariate
//! matrices, support bounds, simplex weights, and the discretized
//! 2-Wasserstein metric.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack allowed when checking that a quantile row is non-decreasing.
pub const MONOTONE_TOL: f64 = 1e-12;

/// The shared m-grid of probability levels in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityGrid {
    levels: Vec<f64>,
}

impl ProbabilityGrid {
    /// Build a grid from explicit levels; they must be strictly increasing
    /// and strictly inside (0, 1).
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("probability grid must be non-empty"));
        }
        if levels[0] <= 0.0 || *levels.last().unwrap() >= 1.0 {
            return Err(Error::invalid("grid levels must lie strictly in (0, 1)"));
        }
        for w in levels.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::invalid("grid levels must be strictly increasing"));
            }
        }
        Ok(ProbabilityGrid { levels })
    }

    pub fn m(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// Midpoint grid: levels[k] = (2k + 1) / (2m), so no level touches 0 or 1.
pub fn make_grid(m: usize) -> Result<ProbabilityGrid> {
    if m == 0 {
        return Err(Error::invalid("grid size m must be positive"));
    }
    let levels = (0..m)
        .map(|k| (2 * k + 1) as f64 / (2 * m) as f64)
        .collect();
    Ok(ProbabilityGrid { levels })
}

/// Squared 2-Wasserstein distance between two quantile rows on the grid:
/// (1/m) Σ (q1[k] − q2[k])², the midpoint-rule discretization of
/// ∫₀¹ (Q₁ − Q₂)² du.
pub fn wasserstein2_sq(q1: &[f64], q2: &[f64], grid: &ProbabilityGrid) -> Result<f64> {
    let m = grid.m();
    if q1.len() != m || q2.len() != m {
        return Err(Error::invalid(format!(
            "quantile rows must have grid length {m} (got {} and {})",
            q1.len(),
            q2.len()
        )));
    }
    let sum: f64 = q1
        .iter()
        .zip(q2)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / m as f64)
}

/// n×m matrix of quantile functions; row i is subject i's quantile function
/// on the grid, non-decreasing within `MONOTONE_TOL`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileMatrix {
    values: Array2<f64>,
}

impl QuantileMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(i)
    }

    /// Keep only the given subject rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> QuantileMatrix {
        let m = self.m();
        let mut out = Array2::<f64>::zeros((rows.len(), m));
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(k).assign(&self.values.row(i));
        }
        QuantileMatrix { values: out }
    }
}

/// Validate a raw matrix as a `QuantileMatrix`, reporting every violating
/// (row, index) pair at once.
pub fn validate_quantile_matrix(values: Array2<f64>) -> Result<QuantileMatrix> {
    let mut bad = Vec::new();
    for (i, row) in values.rows().into_iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                bad.push((i, k));
            } else if k > 0 && row[k - 1].is_finite() && v < row[k - 1] - MONOTONE_TOL {
                bad.push((i, k));
            }
        }
    }
    if !bad.is_empty() {
        let preview: Vec<String> = bad
            .iter()
            .take(5)
            .map(|(i, k)| format!("({i}, {k})"))
            .collect();
        return Err(Error::Validation {
            message: format!(
                "{} non-monotone or non-finite entries, first at {}",
                bad.len(),
                preview.join(", ")
            ),
            locations: bad,
        });
    }
    Ok(QuantileMatrix { values })
}

/// n×p matrix of covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix {
    values: Array2<f64>,
}

impl CovariateMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let (n, p) = values.dim();
        if n < 2 {
            return Err(Error::invalid("need at least 2 subjects"));
        }
        if p < 1 {
            return Err(Error::invalid("need at least 1 covariate"));
        }
        let mut bad = Vec::new();
        for (i, row) in values.rows().into_iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    bad.push((i, j));
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::Validation {
                message: format!("{} non-finite covariate entries", bad.len()),
                locations: bad,
            });
        }
        Ok(CovariateMatrix { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn subset(&self, rows: &[usize]) -> Result<CovariateMatrix> {
        let p = self.p();
        let mut out = Array2::<f64>::zeros((rows.len(), p));
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(k).assign(&self.values.row(i));
        }
        CovariateMatrix::new(out)
    }
}

/// Support constraints on the underlying distributions; either end may be
/// infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportBounds {
    pub lower: f64,
    pub upper: f64,
}

impl SupportBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower >= upper {
            return Err(Error::invalid(format!(
                "support bounds require lower < upper (got {lower}, {upper})"
            )));
        }
        Ok(SupportBounds { lower, upper })
    }

    pub fn unbounded() -> Self {
        SupportBounds {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    pub fn has_lower(&self) -> bool {
        self.lower.is_finite()
    }

    pub fn has_upper(&self) -> bool {
        self.upper.is_finite()
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.max(self.lower).min(self.upper)
    }
}

/// Variable-selection weights λ on the τ-simplex: λ_j ≥ 0, Σ λ_j = τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    pub tau: f64,
    pub lambda: Vec<f64>,
}

impl SimplexWeights {
    pub fn new(tau: f64, lambda: Vec<f64>) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        if lambda.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("lambda components must be finite and >= 0"));
        }
        let sum: f64 = lambda.iter().sum();
        if (sum - tau).abs() > 1e-10 * tau.max(1.0) {
            return Err(Error::invalid(format!(
                "lambda must sum to tau = {tau} (got {sum})"
            )));
        }
        Ok(SimplexWeights { tau, lambda })
    }

    /// λ = τ·(w ∘ w) for a unit sphere point w.
    pub fn from_sphere(tau: f64, w: &[f64]) -> Result<Self> {
        let mut lambda: Vec<f64> = w.iter().map(|&x| tau * x * x).collect();
        let sum: f64 = lambda.iter().sum();
        if sum > 0.0 {
            for v in &mut lambda {
                *v *= tau / sum;
            }
        }
        SimplexWeights::new(tau, lambda)
    }

    pub fn p(&self) -> usize {
        self.lambda.len()
    }
}
