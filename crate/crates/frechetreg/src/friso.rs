//! Variable selection for Fréchet regression: minimize the discrepancy F(λ)
//! between weighted regression fits Q̂(λ) and the data Y over the τ-simplex.
//!
//! The simplex is parameterized by the unit sphere, λ = τ·(w ∘ w), and F is
//! minimized by second-order geodesic descent with optional impulse
//! (momentum). The weighting enters through the ridge-form hat matrix
//! H(λ) = (1/n)(𝟙𝟙ᵀ + Xc A(λ) Xcᵀ) with
//! A(λ) = Λ^{1/2} (Λ^{1/2} Σ Λ^{1/2} + I)⁻¹ Λ^{1/2}; the Λ^{1/2}
//! factorization keeps λ_j = 0 exactly representable (hard exclusion of
//! variable j). Projection active sets from one iterate warm-start the next.
//!
//! F is piecewise smooth: where a projection active set changes, the
//! fixed-active-set gradient is a subgradient surrogate and backtracking
//! supplies descent. This is a documented limitation, not an error.

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::core::{CovariateMatrix, QuantileMatrix, SimplexWeights, SupportBounds};
use crate::error::{Error, Result};
use crate::frechet::{center_design, project_rows, CenteredDesign};
use crate::linalg;
use crate::monotone_qp::{apply_active_jacobian, ActiveSet};

/// Components of λ below this fraction of τ are reported as exactly zero.
const ZERO_CLAMP: f64 = 1e-10;

/// A point on the unit sphere representing simplex weights λ = τ·(w ∘ w).
#[derive(Debug, Clone)]
pub struct SpherePoint {
    pub w: Vec<f64>,
    pub tau: f64,
}

impl SpherePoint {
    pub fn new(tau: f64, w: Vec<f64>) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::invalid("tau must be positive"));
        }
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::invalid("sphere point must have nonzero finite norm"));
        }
        let w = w.into_iter().map(|v| v / norm).collect();
        Ok(SpherePoint { w, tau })
    }

    /// Uniform initialization w = 𝟙/√p, i.e. λ = τ/p per coordinate.
    pub fn uniform(tau: f64, p: usize) -> Result<Self> {
        SpherePoint::new(tau, vec![1.0; p])
    }

    pub fn weights(&self) -> Result<SimplexWeights> {
        SimplexWeights::from_sphere(self.tau, &self.w)
    }
}

/// Configuration for the geodesic descent.
#[derive(Debug, Clone)]
pub struct DescentConfig {
    /// Convergence tolerance on the tangent-gradient norm.
    pub epsilon: f64,
    /// Momentum coefficient in [0, 1); 0 is plain descent.
    pub impulse: f64,
    pub max_iter: usize,
    /// Backtracking shrink factor in (0, 1).
    pub step_shrink: f64,
    pub max_backtracks: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        DescentConfig {
            epsilon: 1e-6,
            impulse: 0.0,
            max_iter: 500,
            step_shrink: 0.5,
            max_backtracks: 30,
        }
    }
}

impl DescentConfig {
    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if !(0.0..1.0).contains(&self.impulse) {
            return Err(Error::invalid("impulse must lie in [0, 1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::invalid("step_shrink must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// One accepted descent iteration, for diagnostics streams.
#[derive(Debug, Clone, Serialize)]
pub struct IterDiag {
    pub iteration: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub step: f64,
    pub backtracks: usize,
    pub active_set_changes: usize,
}

#[derive(Debug, Clone)]
pub struct FrisoResult {
    pub lambda: SimplexWeights,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub active_sets: Vec<ActiveSet>,
    pub gradient_norm: f64,
    /// Final sphere iterate, the warm-start currency along a τ path.
    pub sphere: SpherePoint,
    /// Total dual active-set working-set changes across all projections.
    pub qp_iterations: usize,
    pub history: Vec<IterDiag>,
}

/// Precomputed quantities shared across all objective/gradient evaluations
/// on one dataset.
pub struct FrisoProblem {
    pub design: CenteredDesign,
    pub bounds: SupportBounds,
    y: Array2<f64>,
    /// Xcᵀ Y, p×m.
    g: Array2<f64>,
    /// Column means of Y.
    col_mean: Array1<f64>,
    n: usize,
    m: usize,
    p: usize,
}

impl FrisoProblem {
    pub fn new(x: &CovariateMatrix, y: &QuantileMatrix, bounds: &SupportBounds) -> Result<Self> {
        if x.n() != y.n() {
            return Err(Error::invalid(format!(
                "covariates have {} rows but responses have {}",
                x.n(),
                y.n()
            )));
        }
        let design = center_design(x);
        let g = design.xc.t().dot(y.values());
        let col_mean = y.values().mean_axis(ndarray::Axis(0)).unwrap();
        Ok(FrisoProblem {
            design,
            bounds: *bounds,
            y: y.values().clone(),
            g,
            col_mean,
            n: y.n(),
            m: y.m(),
            p: x.p(),
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

/// Ridge-form weighting matrix A(λ) = Λ^{1/2}(Λ^{1/2} Σ Λ^{1/2} + I)⁻¹ Λ^{1/2}.
/// For all-positive λ this equals (Σ + Λ⁻¹)⁻¹; rows/columns with λ_j = 0 are
/// exactly zero.
pub fn ridge_matrix(sigma: &Array2<f64>, lambda: &SimplexWeights) -> Result<Array2<f64>> {
    let p = sigma.nrows();
    if lambda.p() != p {
        return Err(Error::invalid("lambda length must match Sigma dimension"));
    }
    let s: Vec<f64> = lambda.lambda.iter().map(|v| v.sqrt()).collect();
    let mut inner = Array2::<f64>::eye(p);
    for i in 0..p {
        for j in 0..p {
            inner[(i, j)] += s[i] * s[j] * sigma[(i, j)];
        }
    }
    let minv = linalg::spd_inverse(&inner)?;
    let mut a = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            a[(i, j)] = s[i] * minv[(i, j)] * s[j];
        }
    }
    Ok(a)
}

/// Dense weighted hat matrix H(λ) = (1/n)(𝟙𝟙ᵀ + Xc A(λ) Xcᵀ). Used for
/// verification; the objective fast path never materializes it.
pub fn weighted_hat(design: &CenteredDesign, lambda: &SimplexWeights) -> Result<Array2<f64>> {
    let a = ridge_matrix(&design.sigma, lambda)?;
    let n = design.xc.nrows();
    let mut h = design.xc.dot(&a.dot(&design.xc.t()));
    h += 1.0;
    h /= n as f64;
    Ok(h)
}

/// State carried from an objective evaluation into the matching gradient
/// evaluation and into warm starts for the next iterate.
pub struct ObjectiveState {
    pub f: f64,
    pub qhat: Array2<f64>,
    pub active_sets: Vec<ActiveSet>,
    pub qp_iterations: usize,
    pub lambda: SimplexWeights,
    ridge: Array2<f64>,
}

/// F(w) = Σ_i (1/m)‖Q̂_i(λ(w)) − Y_i‖² with Q̂ the projected weighted fit.
pub fn friso_objective(
    w: &SpherePoint,
    problem: &FrisoProblem,
    warm: Option<&[ActiveSet]>,
) -> Result<ObjectiveState> {
    let lambda = w.weights()?;
    let a = ridge_matrix(&problem.design.sigma, &lambda)?;
    // Unprojected rows: col_mean + (1/n) Xc A (Xcᵀ Y).
    let corr = problem.design.xc.dot(&a.dot(&problem.g)) / problem.n as f64;
    let unprojected = &corr + &problem.col_mean.clone().insert_axis(ndarray::Axis(0));
    let (qhat, active_sets, qp_iterations) = project_rows(&unprojected, &problem.bounds, warm)?;
    let f = (&qhat - &problem.y).iter().map(|v| v * v).sum::<f64>() / problem.m as f64;
    Ok(ObjectiveState {
        f,
        qhat,
        active_sets,
        qp_iterations,
        lambda,
        ridge: a,
    })
}

/// Tangent gradient of F at w, using the fixed-active-set Jacobian of each
/// row projection (block averaging, bound-pinned blocks zeroed).
pub fn friso_gradient(w: &SpherePoint, problem: &FrisoProblem, state: &ObjectiveState) -> Vec<f64> {
    let (n, m, p) = (problem.n, problem.m, problem.p);
    // Rows s_i = B_i (Q̂_i − Y_i).
    let mut s_mat = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        let resid: Vec<f64> = (0..m)
            .map(|k| state.qhat[(i, k)] - problem.y[(i, k)])
            .collect();
        let si = apply_active_jacobian(m, &problem.bounds, &state.active_sets[i], &resid);
        for (k, v) in si.iter().enumerate() {
            s_mat[(i, k)] = *v;
        }
    }
    // ∂A/∂λ_j = u_j u_jᵀ with u_j = (I − A Σ) e_j; finite at λ_j = 0 where it
    // degenerates to e_j.
    let u_mat = Array2::<f64>::eye(p) - state.ridge.dot(&problem.design.sigma);
    let scale = 2.0 / (m as f64 * n as f64);
    let mut grad_lambda = vec![0.0; p];
    for j in 0..p {
        let u = u_mat.column(j).to_owned();
        let c = problem.design.xc.dot(&u); // n
        let d = problem.g.t().dot(&u); // m
        let sd = s_mat.dot(&d); // n
        grad_lambda[j] = scale * c.dot(&sd);
    }
    // Chain rule to the sphere and tangent projection.
    let g_w: Vec<f64> = grad_lambda
        .iter()
        .zip(&w.w)
        .map(|(g, wi)| 2.0 * w.tau * g * wi)
        .collect();
    let dot: f64 = g_w.iter().zip(&w.w).map(|(g, wi)| g * wi).sum();
    g_w.iter()
        .zip(&w.w)
        .map(|(g, wi)| g - dot * wi)
        .collect()
}

/// Move along the great circle from w in tangent direction `direction` by
/// step `alpha`: w' = w·cos(α‖d‖) + (d/‖d‖)·sin(α‖d‖).
pub fn geodesic_step(w: &SpherePoint, direction: &[f64], alpha: f64) -> SpherePoint {
    let dn = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    if dn == 0.0 {
        return w.clone();
    }
    let theta = alpha * dn;
    let (c, s) = (theta.cos(), theta.sin());
    let mut out: Vec<f64> = w
        .w
        .iter()
        .zip(direction)
        .map(|(wi, di)| wi * c + (di / dn) * s)
        .collect();
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut out {
        *v /= norm;
    }
    SpherePoint { w: out, tau: w.tau }
}

fn clamp_lambda(tau: f64, lambda: SimplexWeights) -> SimplexWeights {
    let mut vals = lambda.lambda;
    for v in &mut vals {
        if *v < ZERO_CLAMP * tau {
            *v = 0.0;
        }
    }
    let sum: f64 = vals.iter().sum();
    if sum > 0.0 {
        for v in &mut vals {
            *v *= tau / sum;
        }
    }
    SimplexWeights { tau, lambda: vals }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Geodesic probe angle for the directional curvature estimate.
const PROBE_ANGLE: f64 = 1e-5;

pub fn solve_friso(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    tau: f64,
    bounds: &SupportBounds,
    config: &DescentConfig,
    init: Option<&SpherePoint>,
    warm: Option<&[ActiveSet]>,
) -> Result<FrisoResult> {
    let problem = FrisoProblem::new(x, y, bounds)?;
    solve_friso_on(&problem, tau, config, init, warm)
}

/// Descent loop on a prebuilt problem, so τ paths and resampling replicates
/// reuse the precomputations.
pub fn solve_friso_on(
    problem: &FrisoProblem,
    tau: f64,
    config: &DescentConfig,
    init: Option<&SpherePoint>,
    warm: Option<&[ActiveSet]>,
) -> Result<FrisoResult> {
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    config.validate()?;
    let p = problem.p;
    let mut w = match init {
        Some(s) => SpherePoint::new(tau, s.w.clone())?,
        None => SpherePoint::uniform(tau, p)?,
    };
    let mut state = friso_objective(&w, problem, warm)?;
    let mut qp_total = state.qp_iterations;
    if p == 1 {
        // The τ-simplex is a single point.
        return Ok(FrisoResult {
            lambda: clamp_lambda(tau, state.lambda.clone()),
            objective: state.f,
            iterations: 0,
            converged: true,
            active_sets: state.active_sets,
            gradient_norm: 0.0,
            sphere: w,
            qp_iterations: qp_total,
            history: Vec::new(),
        });
    }
    let mut grad = friso_gradient(&w, problem, &state);
    let mut prev_dir: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < config.max_iter {
        let gnorm = norm(&grad);
        if gnorm <= config.epsilon {
            converged = true;
            break;
        }
        // Descent direction: negative gradient blended with the transported
        // previous direction, reset to steepest descent if momentum ruins it.
        let mut d: Vec<f64> = grad.iter().map(|g| -g).collect();
        if config.impulse > 0.0 {
            if let Some(prev) = &prev_dir {
                for (di, pi) in d.iter_mut().zip(prev) {
                    *di += config.impulse * pi;
                }
                let wdot: f64 = d.iter().zip(&w.w).map(|(a, b)| a * b).sum();
                for (di, wi) in d.iter_mut().zip(&w.w) {
                    *di -= wdot * wi;
                }
                let slope: f64 = d.iter().zip(&grad).map(|(a, b)| a * b).sum();
                if slope >= 0.0 {
                    d = grad.iter().map(|g| -g).collect();
                }
            }
        }
        let dn = norm(&d);
        if dn == 0.0 {
            converged = true;
            break;
        }
        let u: Vec<f64> = d.iter().map(|v| v / dn).collect();
        let slope0: f64 = grad.iter().zip(&u).map(|(g, ui)| g * ui).sum();
        // Directional curvature from one extra gradient evaluation at a small
        // geodesic probe step.
        let w_probe = geodesic_step(&w, &u, PROBE_ANGLE);
        let state_probe = friso_objective(&w_probe, problem, Some(&state.active_sets))?;
        qp_total += state_probe.qp_iterations;
        let grad_probe = friso_gradient(&w_probe, problem, &state_probe);
        let (ch, sh) = (PROBE_ANGLE.cos(), PROBE_ANGLE.sin());
        let slope_probe: f64 = grad_probe
            .iter()
            .zip(w.w.iter().zip(&u))
            .map(|(g, (wi, ui))| g * (ui * ch - wi * sh))
            .sum();
        let curvature = (slope_probe - slope0) / PROBE_ANGLE;
        let mut theta = if curvature > 1e-12 {
            (-slope0 / curvature).min(std::f64::consts::FRAC_PI_2)
        } else {
            1.0
        };
        // Backtrack until F decreases.
        let mut accepted: Option<(SpherePoint, ObjectiveState, f64, usize)> = None;
        for bt in 0..=config.max_backtracks {
            // u is unit, so the step angle is exactly theta.
            let w_new = geodesic_step(&w, &u, theta);
            let state_new = friso_objective(&w_new, problem, Some(&state.active_sets))?;
            qp_total += state_new.qp_iterations;
            if state_new.f < state.f {
                accepted = Some((w_new, state_new, theta, bt));
                break;
            }
            theta *= config.step_shrink;
        }
        let Some((w_new, state_new, step, backtracks)) = accepted else {
            // Could not decrease F: return best-so-far, not an error.
            converged = false;
            break;
        };
        iterations += 1;
        let changes = state
            .active_sets
            .iter()
            .zip(&state_new.active_sets)
            .filter(|(a, b)| a != b)
            .count();
        history.push(IterDiag {
            iteration: iterations,
            objective: state_new.f,
            gradient_norm: gnorm,
            step,
            backtracks,
            active_set_changes: changes,
        });
        // Parallel transport of the accepted direction for momentum.
        let (c, s) = (step.cos(), step.sin());
        prev_dir = Some(
            u.iter()
                .zip(&w.w)
                .map(|(ui, wi)| dn * (ui * c - wi * s))
                .collect(),
        );
        w = w_new;
        state = state_new;
        grad = friso_gradient(&w, problem, &state);
    }
    let gradient_norm = norm(&grad);
    if gradient_norm <= config.epsilon {
        converged = true;
    }
    Ok(FrisoResult {
        lambda: clamp_lambda(tau, state.lambda.clone()),
        objective: state.f,
        iterations,
        converged,
        active_sets: state.active_sets,
        gradient_norm,
        sphere: w,
        qp_iterations: qp_total,
        history,
    })
}

/// Per-τ diagnostics along a solution path.
#[derive(Debug, Clone, Serialize)]
pub struct PathDiag {
    pub tau: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolutionPath {
    pub taus: Vec<f64>,
    /// p×|grid| matrix; column k is λ̂(τ_k).
    pub lambdas: Array2<f64>,
    pub diagnostics: Vec<PathDiag>,
}

/// Solve λ̂(τ) over an increasing τ grid; the sphere point and active sets at
/// τ_k initialize τ_{k+1}.
pub fn solution_path(
    x: &CovariateMatrix,
    y: &QuantileMatrix,
    tau_grid: &[f64],
    bounds: &SupportBounds,
    config: &DescentConfig,
) -> Result<SolutionPath> {
    if tau_grid.is_empty() {
        return Err(Error::invalid("tau grid must be non-empty"));
    }
    if tau_grid.windows(2).any(|w| w[1] <= w[0]) || tau_grid[0] <= 0.0 {
        return Err(Error::invalid("tau grid must be strictly increasing and positive"));
    }
    let problem = FrisoProblem::new(x, y, bounds)?;
    let p = problem.p;
    let mut lambdas = Array2::<f64>::zeros((p, tau_grid.len()));
    let mut diagnostics = Vec::with_capacity(tau_grid.len());
    let mut init: Option<SpherePoint> = None;
    let mut warm: Option<Vec<ActiveSet>> = None;
    // Coordinates excluded at τ_k may re-enter at τ_{k+1}, but the sphere
    // map squashes the gradient by w_j, so an exact-zero coordinate is a
    // stationary trap. Floor the warm start away from the boundary.
    let floor = 1e-2 / (p as f64).sqrt();
    for (k, &tau) in tau_grid.iter().enumerate() {
        let start = init
            .take()
            .map(|s| {
                let w: Vec<f64> = s.w.iter().map(|v| v.abs().max(floor)).collect();
                SpherePoint::new(tau, w)
            })
            .transpose()?;
        let r = solve_friso_on(&problem, tau, config, start.as_ref(), warm.as_deref())?;
        for j in 0..p {
            lambdas[(j, k)] = r.lambda.lambda[j];
        }
        diagnostics.push(PathDiag {
            tau,
            objective: r.objective,
            iterations: r.iterations,
            converged: r.converged,
            gradient_norm: r.gradient_norm,
            qp_iterations: r.qp_iterations,
        });
        init = Some(r.sphere);
        warm = Some(r.active_sets);
    }
    Ok(SolutionPath {
        taus: tau_grid.to_vec(),
        lambdas,
        diagnostics,
    })
}
