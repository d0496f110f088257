//! Automatic τ selection by K-fold cross-validation and variable-set
//! selection by stability selection over half-sample subsampling.
//!
//! Replicate and fold RNG streams are derived from (seed, replicate index),
//! never from execution order, so reports are bitwise reproducible for a
//! given seed regardless of the worker-pool size.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::core::{wasserstein2_sq, CovariateMatrix, ProbabilityGrid, QuantileMatrix, SupportBounds};
use crate::error::{Error, Result};
use crate::friso::{ridge_matrix, solve_friso_on, DescentConfig, FrisoProblem, SpherePoint};
use crate::monotone_qp::{project_monotone, ActiveSet};

#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub tau_grid: Vec<f64>,
    /// Mean held-out squared 2-Wasserstein prediction error per τ.
    pub cv_error: Vec<f64>,
    /// Smallest τ attaining the minimum error.
    pub tau_star: f64,
    pub fold_assignments: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub tau_grid: Vec<f64>,
    /// proportions[j][k]: fraction of replicates selecting variable j at τ_k.
    pub proportions: Vec<Vec<f64>>,
    pub max_proportion: Vec<f64>,
    /// Variables with max selection proportion ≥ pi_threshold (0-based).
    pub selected: Vec<usize>,
    pub b: usize,
    pub pi_threshold: f64,
    pub selection_cutoff: f64,
}

fn check_tau_grid(tau_grid: &[f64]) -> Result<()> {
    if tau_grid.is_empty() {
        return Err(Error::invalid("tau grid must be non-empty"));
    }
    if tau_grid[0] <= 0.0 || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("tau grid must be strictly increasing and positive"));
    }
    Ok(())
}

/// Deterministic fold assignment: shuffle 0..n−1 from the seed, deal
/// round-robin. Sizes differ by at most one.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut folds = vec![0usize; n];
    for (pos, &subject) in order.iter().enumerate() {
        folds[subject] = pos % k;
    }
    folds
}

/// Out-of-sample weighted prediction at covariate row `x`: row-mean of the
/// training responses plus (x − x̄)ᵀ A(λ̂) Xcᵀ Y / n, projected.
fn weighted_predict_row(
    problem_design: &crate::frechet::CenteredDesign,
    y_train: &QuantileMatrix,
    lambda: &crate::core::SimplexWeights,
    bounds: &SupportBounds,
    x_row: &[f64],
) -> Result<Vec<f64>> {
    let n = y_train.n() as f64;
    let a = ridge_matrix(&problem_design.sigma, lambda)?;
    let col_mean = y_train.values().mean_axis(ndarray::Axis(0)).unwrap();
    let centered: Vec<f64> = x_row
        .iter()
        .zip(problem_design.xbar.iter())
        .map(|(x, xb)| x - xb)
        .collect();
    let centered = ndarray::Array1::from(centered);
    let weights = a.dot(&centered); // A symmetric, so Aᵀ(x−x̄) = A(x−x̄)
    let g = problem_design.xc.t().dot(y_train.values()); // p×m
    let row = &col_mean + &weights.dot(&g) / n;
    Ok(project_monotone(row.as_slice().unwrap(), bounds, None)?.q)
}

#[allow(clippy::too_many_arguments)]
pub fn kfold_cv(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    tau_grid: &[f64],
    bounds: &SupportBounds,
    k: usize,
    config: &DescentConfig,
    seed: u64,
) -> Result<CvReport> {
    let n = x.n();
    if x.n() != y.n() {
        return Err(Error::invalid("covariates and responses disagree on n"));
    }
    if k < 2 || k > n {
        return Err(Error::invalid(format!("K must lie in [2, n] (got {k}, n = {n})")));
    }
    check_tau_grid(tau_grid)?;
    let folds = assign_folds(n, k, seed);
    let grid = crate::core::make_grid(y.m())?;
    // Per-fold error sums per τ, computed independently and reduced in fixed
    // fold order so the result is thread-count invariant.
    let fold_sums: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|f| fold_error_sums(x, y, tau_grid, bounds, config, &folds, f, &grid))
        .collect::<Result<Vec<_>>>()?;
    let mut cv_error = vec![0.0; tau_grid.len()];
    for sums in &fold_sums {
        for (e, s) in cv_error.iter_mut().zip(sums) {
            *e += s;
        }
    }
    for e in &mut cv_error {
        *e /= n as f64;
    }
    let mut best = 0usize;
    for (i, &e) in cv_error.iter().enumerate() {
        if e < cv_error[best] {
            best = i;
        }
    }
    Ok(CvReport {
        tau_grid: tau_grid.to_vec(),
        cv_error,
        tau_star: tau_grid[best],
        fold_assignments: folds,
    })
}

#[allow(clippy::too_many_arguments)]
fn fold_error_sums(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    tau_grid: &[f64],
    bounds: &SupportBounds,
    config: &DescentConfig,
    folds: &[usize],
    fold: usize,
    grid: &ProbabilityGrid,
) -> Result<Vec<f64>> {
    let train: Vec<usize> = (0..x.n()).filter(|&i| folds[i] != fold).collect();
    let test: Vec<usize> = (0..x.n()).filter(|&i| folds[i] == fold).collect();
    let x_train = x.subset(&train)?;
    let y_train = y.subset(&train);
    let problem = FrisoProblem::new(&x_train, &y_train, bounds)?;
    let mut sums = vec![0.0; tau_grid.len()];
    let mut init: Option<SpherePoint> = None;
    let mut warm: Option<Vec<ActiveSet>> = None;
    for (t, &tau) in tau_grid.iter().enumerate() {
        let r = solve_friso_on(&problem, tau, config, init.as_ref(), warm.as_deref())?;
        for &i in &test {
            let pred = weighted_predict_row(
                &problem.design,
                &y_train,
                &r.lambda,
                bounds,
                &x.values().row(i).to_vec(),
            )?;
            sums[t] += wasserstein2_sq(&pred, y.row(i).to_vec().as_slice(), grid)?;
        }
        init = Some(r.sphere);
        warm = Some(r.active_sets);
    }
    Ok(sums)
}

#[allow(clippy::too_many_arguments)]
pub fn stability_selection(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    tau_grid: &[f64],
    bounds: &SupportBounds,
    b: usize,
    pi_threshold: f64,
    selection_cutoff: f64,
    config: &DescentConfig,
    seed: u64,
) -> Result<StabilityReport> {
    if b < 1 {
        return Err(Error::invalid("B must be at least 1"));
    }
    if !(pi_threshold > 0.5 && pi_threshold <= 1.0) {
        return Err(Error::invalid("pi_threshold must lie in (0.5, 1]"));
    }
    if !(selection_cutoff > 0.0) {
        return Err(Error::invalid("selection_cutoff must be positive"));
    }
    check_tau_grid(tau_grid)?;
    let n = x.n();
    let p = x.p();
    let half = n / 2;
    if half < 2 {
        return Err(Error::invalid("need n >= 4 for half-sample subsampling"));
    }
    // Replicate counts, each computed from its own seeded stream.
    let counts: Vec<Array2<u32>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(rep as u64 + 1);
            let mut subsample = rand::seq::index::sample(&mut rng, n, half).into_vec();
            subsample.sort_unstable();
            let xs = x.subset(&subsample)?;
            let ys = y.subset(&subsample);
            let path = crate::friso::solution_path(&xs, &ys, tau_grid, bounds, config)?;
            let mut sel = Array2::<u32>::zeros((p, tau_grid.len()));
            for (k, &tau) in tau_grid.iter().enumerate() {
                let cutoff = selection_cutoff * tau / p as f64;
                for j in 0..p {
                    if path.lambdas[(j, k)] > cutoff {
                        sel[(j, k)] = 1;
                    }
                }
            }
            Ok(sel)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = Array2::<u32>::zeros((p, tau_grid.len()));
    for c in &counts {
        total += c;
    }
    let proportions: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            (0..tau_grid.len())
                .map(|k| total[(j, k)] as f64 / b as f64)
                .collect()
        })
        .collect();
    let max_proportion: Vec<f64> = proportions
        .iter()
        .map(|row| row.iter().cloned().fold(0.0, f64::max))
        .collect();
    let selected: Vec<usize> = (0..p)
        .filter(|&j| max_proportion[j] >= pi_threshold)
        .collect();
    Ok(StabilityReport {
        tau_grid: tau_grid.to_vec(),
        proportions,
        max_proportion,
        selected,
        b,
        pi_threshold,
        selection_cutoff,
    })
}
