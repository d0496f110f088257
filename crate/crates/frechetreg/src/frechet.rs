//! Global Fréchet regression for quantile-function responses in
//! 2-Wasserstein space. The fit at each subject is a weighted average of the
//! response rows (hat matrix H = (1/n)(𝟙𝟙ᵀ + Xc Σ⁻¹ Xcᵀ)) projected onto the
//! monotone, bounded cone.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::core::{CovariateMatrix, QuantileMatrix, SupportBounds};
use crate::error::{Error, Result};
use crate::linalg;
use crate::monotone_qp::{project_monotone, ActiveSet};

/// Condition-number cutoff beyond which the design is treated as singular.
const MAX_CONDITION: f64 = 1e12;

/// Centered design: column means, centered covariates, and the 1/n sample
/// covariance.
#[derive(Debug, Clone)]
pub struct CenteredDesign {
    pub xbar: Array1<f64>,
    pub xc: Array2<f64>,
    pub sigma: Array2<f64>,
}

pub fn center_design(x: &CovariateMatrix) -> CenteredDesign {
    let n = x.n();
    let v = x.values();
    let xbar = v.mean_axis(ndarray::Axis(0)).unwrap();
    let xc = v - &xbar.clone().insert_axis(ndarray::Axis(0));
    let sigma = xc.t().dot(&xc) / n as f64;
    CenteredDesign { xbar, xc, sigma }
}

/// Inverse of the design covariance, rejecting singular or badly conditioned
/// designs (condition number above 1e12).
pub fn sigma_inverse(design: &CenteredDesign) -> Result<Array2<f64>> {
    let ev = linalg::symmetric_eigenvalues(&design.sigma);
    let max = ev.iter().cloned().fold(f64::MIN, f64::max);
    let min = ev.iter().cloned().fold(f64::MAX, f64::min);
    if min <= 0.0 || max / min > MAX_CONDITION {
        return Err(Error::SingularDesign(
            "covariate covariance is singular or near-singular; \
             the weighted variable-selection path is always well-posed and \
             can be used instead"
                .into(),
        ));
    }
    linalg::spd_inverse(&design.sigma)
}

/// A completed Fréchet regression fit.
#[derive(Debug, Clone)]
pub struct FrechetFit {
    pub qhat: QuantileMatrix,
    pub active_sets: Vec<ActiveSet>,
    pub bounds: SupportBounds,
}

fn check_shapes(x: &CovariateMatrix, y: &QuantileMatrix) -> Result<()> {
    if x.n() != y.n() {
        return Err(Error::invalid(format!(
            "covariates have {} rows but responses have {}",
            x.n(),
            y.n()
        )));
    }
    Ok(())
}

/// Project each row of an unconstrained fitted matrix, in parallel, keeping
/// subject order in the output.
pub(crate) fn project_rows(
    unprojected: &Array2<f64>,
    bounds: &SupportBounds,
    warm: Option<&[ActiveSet]>,
) -> Result<(Array2<f64>, Vec<ActiveSet>, usize)> {
    let n = unprojected.nrows();
    let m = unprojected.ncols();
    let results: Vec<_> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = unprojected.row(i).to_vec();
            project_monotone(&row, bounds, warm.map(|w| &w[i]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Array2::<f64>::zeros((n, m));
    let mut sets = Vec::with_capacity(n);
    let mut qp_iterations = 0usize;
    for (i, r) in results.into_iter().enumerate() {
        for (k, v) in r.q.iter().enumerate() {
            out[(i, k)] = *v;
        }
        sets.push(r.active);
        qp_iterations += r.iterations;
    }
    Ok((out, sets, qp_iterations))
}

/// Unconstrained fitted rows H·Y, computed without materializing H:
/// (1/n)(𝟙(𝟙ᵀY) + Xc Σ⁻¹ (XcᵀY)).
fn unconstrained_fit(
    design: &CenteredDesign,
    sigma_inv: &Array2<f64>,
    y: &QuantileMatrix,
) -> Array2<f64> {
    let n = y.n() as f64;
    let col_mean = y.values().mean_axis(ndarray::Axis(0)).unwrap();
    let g = design.xc.t().dot(y.values()); // p×m
    let corr = design.xc.dot(&sigma_inv.dot(&g)) / n; // n×m
    &corr + &col_mean.insert_axis(ndarray::Axis(0))
}

pub fn fit_frechet(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    bounds: &SupportBounds,
) -> Result<FrechetFit> {
    check_shapes(x, y)?;
    let design = center_design(x);
    let sigma_inv = sigma_inverse(&design)?;
    let a = unconstrained_fit(&design, &sigma_inv, y);
    let (qhat, active_sets, _) = project_rows(&a, bounds, None)?;
    Ok(FrechetFit {
        qhat: crate::core::validate_quantile_matrix(qhat)?,
        active_sets,
        bounds: *bounds,
    })
}

/// Out-of-sample prediction: weight s_i(x) = 1 + (x − x̄)ᵀ Σ⁻¹ (x_i − x̄),
/// predicted row = (1/n) Σ_i s_i(x)·Y_i, projected. Predicting at the
/// training design reproduces `fit_frechet`.
pub fn predict_frechet(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    bounds: &SupportBounds,
    xnew: &Array2<f64>,
) -> Result<QuantileMatrix> {
    check_shapes(x, y)?;
    if xnew.ncols() != x.p() {
        return Err(Error::invalid(format!(
            "prediction points have {} columns but the design has {}",
            xnew.ncols(),
            x.p()
        )));
    }
    let design = center_design(x);
    let sigma_inv = sigma_inverse(&design)?;
    let n = y.n() as f64;
    let q = xnew.nrows();
    let m = y.m();
    let col_mean = y.values().mean_axis(ndarray::Axis(0)).unwrap();
    let g = design.xc.t().dot(y.values()); // p×m
    let mut out = Array2::<f64>::zeros((q, m));
    for r in 0..q {
        let centered = &xnew.row(r) - &design.xbar;
        let weights = sigma_inv.dot(&centered); // p
        let row = &col_mean + &weights.dot(&g) / n;
        let proj = project_monotone(row.as_slice().unwrap(), bounds, None)?;
        for (k, v) in proj.q.iter().enumerate() {
            out[(r, k)] = *v;
        }
    }
    crate::core::validate_quantile_matrix(out)
}

/// Dense hat matrix H = (1/n)(𝟙𝟙ᵀ + Xc Σ⁻¹ Xcᵀ); used by tests and the
/// weighted-regression comparison, not by the fitting fast path.
pub fn hat_matrix(design: &CenteredDesign) -> Result<Array2<f64>> {
    let sigma_inv = sigma_inverse(design)?;
    let n = design.xc.nrows();
    let mut h = design.xc.dot(&sigma_inv.dot(&design.xc.t()));
    h += 1.0;
    h /= n as f64;
    Ok(h)
}
