//! Projection of an m-vector onto the cone of non-decreasing vectors inside
//! [lower, upper], solved by a warm-startable dual active-set method.
//!
//! Constraint indexing is fixed for reproducible warm-start serialization:
//!   0       q[0] ≥ lower          (present iff lower finite)
//!   1..m−1  q[j] − q[j−1] ≥ 0
//!   m       −q[m−1] ≥ −upper      (present iff upper finite)
//!
//! Active monotonicity constraints partition the coordinates into contiguous
//! blocks; the equality-constrained subproblem is solved in closed form
//! (block means, bound pins) in O(m), which is the entire performance story:
//! no dense linear algebra appears anywhere in the solver.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::core::SupportBounds;
use crate::error::{Error, Result};

/// Tolerance for "violated" during working-set updates.
const VIOLATION_TOL: f64 = 1e-12;

/// The working set of constraints currently treated as equalities.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActiveSet {
    indices: BTreeSet<usize>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        ActiveSet {
            indices: indices.into_iter().collect(),
        }
    }

    pub fn contains(&self, c: usize) -> bool {
        self.indices.contains(&c)
    }

    pub fn insert(&mut self, c: usize) {
        self.indices.insert(c);
    }

    pub fn remove(&mut self, c: usize) {
        self.indices.remove(&c);
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    /// Drop indices that do not belong to the constraint system of (m, bounds)
    /// and resolve the one infeasible combination (full chain pinned at both
    /// ends, which would force lower = upper) by dropping the upper pin.
    fn sanitized(&self, m: usize, bounds: &SupportBounds) -> ActiveSet {
        let mut s = ActiveSet::new();
        for c in self.iter() {
            if c == 0 {
                if bounds.has_lower() {
                    s.insert(0);
                }
            } else if c < m {
                s.insert(c);
            } else if c == m && bounds.has_upper() {
                s.insert(m);
            }
        }
        let full_chain = (1..m).all(|j| s.contains(j));
        if full_chain && s.contains(0) && s.contains(m) {
            s.remove(m);
        }
        s
    }
}

/// Result of one projection.
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// The projected vector, non-decreasing and inside the bounds.
    pub q: Vec<f64>,
    /// Active set at termination, the warm-start currency.
    pub active: ActiveSet,
    /// Working-set changes performed (adds + drops).
    pub iterations: usize,
    /// Multipliers for the active constraints, in ascending constraint order.
    pub dual: Vec<f64>,
}

/// Contiguous coordinate blocks implied by the active monotonicity
/// constraints: inclusive (start, end) pairs covering 0..m.
pub fn block_structure(m: usize, active: &ActiveSet) -> Vec<(usize, usize)> {
    let mut blocks = Vec::new();
    let mut start = 0usize;
    for j in 1..m {
        if !active.contains(j) {
            blocks.push((start, j - 1));
            start = j;
        }
    }
    blocks.push((start, m - 1));
    blocks
}

/// Apply the projection Jacobian at a fixed active set: block averaging on
/// unpinned blocks, zero on bound-pinned blocks. Symmetric by construction.
pub fn apply_active_jacobian(
    m: usize,
    bounds: &SupportBounds,
    active: &ActiveSet,
    v: &[f64],
) -> Vec<f64> {
    debug_assert_eq!(v.len(), m);
    let mut out = vec![0.0; m];
    for &(s, e) in &block_structure(m, active) {
        let pinned = (s == 0 && bounds.has_lower() && active.contains(0))
            || (e == m - 1 && bounds.has_upper() && active.contains(m));
        if pinned {
            continue;
        }
        let len = (e - s + 1) as f64;
        let mean: f64 = v[s..=e].iter().sum::<f64>() / len;
        for slot in &mut out[s..=e] {
            *slot = mean;
        }
    }
    out
}

struct EqpSolution {
    q: Vec<f64>,
    /// (constraint index, multiplier) for every active constraint.
    mu: Vec<(usize, f64)>,
}

/// Closed-form solve of the equality-constrained subproblem: active
/// monotonicity constraints pool coordinates into blocks at the block mean of
/// `a`; an active bound constraint pins its block to the bound. Multipliers
/// follow from stationarity via prefix sums.
fn solve_eqp(a: &[f64], bounds: &SupportBounds, active: &ActiveSet) -> EqpSolution {
    let m = a.len();
    let mut q = vec![0.0; m];
    let mut mu = Vec::with_capacity(active.len());
    let mut mu_upper = None;
    for &(s, e) in &block_structure(m, active) {
        let pin_lower = s == 0 && active.contains(0);
        let pin_upper = e == m - 1 && active.contains(m);
        debug_assert!(!(pin_lower && pin_upper), "infeasible working set");
        let len = (e - s + 1) as f64;
        let v = if pin_lower {
            bounds.lower
        } else if pin_upper {
            bounds.upper
        } else {
            a[s..=e].iter().sum::<f64>() / len
        };
        for slot in &mut q[s..=e] {
            *slot = v;
        }
        // Stationarity: summing q − a over coords s..k isolates −μ_{k+1}
        // (plus μ_0 when the block is lower-pinned); summing the whole block
        // isolates the bound multiplier.
        let mut running = if pin_lower {
            a[s..=e].iter().map(|x| bounds.lower - x).sum::<f64>()
        } else {
            0.0
        };
        if pin_lower {
            mu.push((0, running));
        }
        for k in s..e {
            running += a[k] - v;
            mu.push((k + 1, running));
        }
        if pin_upper {
            mu_upper = Some(a[s..=e].iter().map(|x| x - bounds.upper).sum::<f64>());
        }
    }
    if let Some(v) = mu_upper {
        mu.push((m, v));
    }
    mu.sort_unstable_by_key(|&(c, _)| c);
    EqpSolution { q, mu }
}

fn constraint_value(q: &[f64], bounds: &SupportBounds, c: usize) -> f64 {
    let m = q.len();
    if c == 0 {
        q[0] - bounds.lower
    } else if c < m {
        q[c] - q[c - 1]
    } else {
        bounds.upper - q[m - 1]
    }
}

/// Project `a` onto {q : q non-decreasing, lower ≤ q ≤ upper}, minimizing
/// ½‖q − a‖². A warm-start active set changes the route, not the solution.
pub fn project_monotone(
    a: &[f64],
    bounds: &SupportBounds,
    warm: Option<&ActiveSet>,
) -> Result<ProjectionResult> {
    let m = a.len();
    if m == 0 {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("projection input must be finite"));
    }
    let mut active = match warm {
        Some(w) => w.sanitized(m, bounds),
        None => ActiveSet::new(),
    };
    let max_changes = 10 * (m + 1);
    let mut iterations = 0usize;
    loop {
        let sol = solve_eqp(a, bounds, &active);
        // Drop the most negative multiplier first; ties go to the smallest
        // constraint index (ascending scan with strict improvement).
        let mut drop: Option<(usize, f64)> = None;
        for &(c, v) in &sol.mu {
            if v < -VIOLATION_TOL && drop.map_or(true, |(_, best)| v < best) {
                drop = Some((c, v));
            }
        }
        if let Some((c, _)) = drop {
            active.remove(c);
            iterations += 1;
            if iterations > max_changes {
                return Err(Error::Internal(format!(
                    "active-set solver exceeded {max_changes} working-set changes (cycling)"
                )));
            }
            continue;
        }
        // All multipliers feasible: add the most violated primal constraint.
        let mut add: Option<(usize, f64)> = None;
        let lo = if bounds.has_lower() { 0 } else { 1 };
        let hi = if bounds.has_upper() { m } else { m - 1 };
        for c in lo..=hi {
            if active.contains(c) {
                continue;
            }
            let v = constraint_value(&sol.q, bounds, c);
            if v < -VIOLATION_TOL && add.map_or(true, |(_, best)| v < best) {
                add = Some((c, v));
            }
        }
        match add {
            Some((c, _)) => {
                active.insert(c);
                iterations += 1;
                if iterations > max_changes {
                    return Err(Error::Internal(format!(
                        "active-set solver exceeded {max_changes} working-set changes (cycling)"
                    )));
                }
            }
            None => {
                let dual = sol.mu.iter().map(|&(_, v)| v).collect();
                return Ok(ProjectionResult {
                    q: sol.q,
                    active,
                    iterations,
                    dual,
                });
            }
        }
    }
}

/// Independent test oracle: pool-adjacent-violators isotonic regression,
/// then coordinatewise clipping to [lower, upper]. This equals the exact
/// solution of the box-constrained isotone projection.
pub fn pava_clip_oracle(a: &[f64], bounds: &SupportBounds) -> Result<Vec<f64>> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("oracle input must be finite"));
    }
    // Blocks as (sum, count); merge while the last block mean exceeds the
    // incoming one.
    let mut sums: Vec<f64> = Vec::with_capacity(a.len());
    let mut counts: Vec<usize> = Vec::with_capacity(a.len());
    for &x in a {
        let mut s = x;
        let mut c = 1usize;
        while let (Some(&ps), Some(&pc)) = (sums.last(), counts.last()) {
            if ps / pc as f64 > s / c as f64 {
                s += ps;
                c += pc;
                sums.pop();
                counts.pop();
            } else {
                break;
            }
        }
        sums.push(s);
        counts.push(c);
    }
    let mut out = Vec::with_capacity(a.len());
    for (s, c) in sums.iter().zip(&counts) {
        let v = bounds.clamp(s / *c as f64);
        out.extend(std::iter::repeat(v).take(*c));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;

    fn unbounded() -> SupportBounds {
        SupportBounds::unbounded()
    }

    fn max_gap(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    fn random_bounds(rng: &mut StdRng) -> SupportBounds {
        match rng.gen_range(0..4) {
            0 => SupportBounds::unbounded(),
            1 => SupportBounds::new(rng.gen_range(-1.0..0.5), f64::INFINITY).unwrap(),
            2 => SupportBounds::new(f64::NEG_INFINITY, rng.gen_range(-0.5..1.0)).unwrap(),
            _ => {
                let l = rng.gen_range(-1.0..0.0);
                SupportBounds::new(l, l + rng.gen_range(0.1..2.0)).unwrap()
            }
        }
    }

    fn normal(rng: &mut StdRng) -> f64 {
        // Box-Muller is plenty for test data.
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    #[test]
    fn already_feasible_is_identity() {
        let r = project_monotone(&[1.0, 2.0, 3.0], &unbounded(), None).unwrap();
        assert_eq!(r.q, vec![1.0, 2.0, 3.0]);
        assert!(r.active.is_empty());
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn decreasing_pair_pools_to_mean() {
        let r = project_monotone(&[2.0, 1.0], &unbounded(), None).unwrap();
        assert_eq!(r.q, vec![1.5, 1.5]);
    }

    #[test]
    fn pool_then_clip_upper() {
        let b = SupportBounds::new(0.0, 1.5).unwrap();
        let a = [3.0, 1.0, 2.0];
        let r = project_monotone(&a, &b, None).unwrap();
        let oracle = pava_clip_oracle(&a, &b).unwrap();
        assert!(max_gap(&r.q, &[1.5, 1.5, 1.5]) < 1e-12);
        assert!(max_gap(&r.q, &oracle) < 1e-12);
    }

    #[test]
    fn clip_lower_only() {
        let b = SupportBounds::new(0.0, f64::INFINITY).unwrap();
        let a = [-1.0, 0.5];
        let r = project_monotone(&a, &b, None).unwrap();
        let oracle = pava_clip_oracle(&a, &b).unwrap();
        assert!(max_gap(&r.q, &[0.0, 0.5]) < 1e-12);
        assert!(max_gap(&r.q, &oracle) < 1e-12);
    }

    #[test]
    fn m_equals_one_clamps() {
        let b = SupportBounds::new(0.0, 1.0).unwrap();
        assert_eq!(project_monotone(&[5.0], &b, None).unwrap().q, vec![1.0]);
        assert_eq!(project_monotone(&[-5.0], &b, None).unwrap().q, vec![0.0]);
        assert_eq!(project_monotone(&[0.3], &b, None).unwrap().q, vec![0.3]);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(project_monotone(&[1.0, f64::NAN], &unbounded(), None).is_err());
        assert!(pava_clip_oracle(&[f64::INFINITY], &unbounded()).is_err());
    }

    #[test]
    fn pava_examples() {
        assert_eq!(pava_clip_oracle(&[2.0, 1.0], &unbounded()).unwrap(), vec![1.5, 1.5]);
        let b = SupportBounds::new(0.0, 2.0).unwrap();
        assert_eq!(
            pava_clip_oracle(&[1.0, 2.0, 3.0], &b).unwrap(),
            vec![1.0, 2.0, 2.0]
        );
    }

    // Brute force over all active-set candidates: solve each equality system
    // directly, keep the feasible candidate with the smallest objective.
    fn exhaustive_oracle(a: &[f64], bounds: &SupportBounds) -> Vec<f64> {
        let m = a.len();
        let mut candidates: Vec<usize> = (1..m).collect();
        if bounds.has_lower() {
            candidates.push(0);
        }
        if bounds.has_upper() {
            candidates.push(m);
        }
        let nc = candidates.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << nc) {
            let chosen: Vec<usize> = (0..nc)
                .filter(|&i| mask & (1 << i) != 0)
                .map(|i| candidates[i])
                .collect();
            // Independent equality solve: group coordinates, pin or average.
            let mut q = vec![0.0; m];
            let mut s = 0usize;
            let mut feasible_system = true;
            for e in 0..m {
                let closes = e == m - 1 || !chosen.contains(&(e + 1));
                if !closes {
                    continue;
                }
                let pin_lo = s == 0 && chosen.contains(&0);
                let pin_hi = e == m - 1 && chosen.contains(&m);
                if pin_lo && pin_hi {
                    feasible_system = false;
                    break;
                }
                let v = if pin_lo {
                    bounds.lower
                } else if pin_hi {
                    bounds.upper
                } else {
                    a[s..=e].iter().sum::<f64>() / (e - s + 1) as f64
                };
                for k in s..=e {
                    q[k] = v;
                }
                s = e + 1;
            }
            if !feasible_system {
                continue;
            }
            let feasible = q.windows(2).all(|w| w[1] >= w[0] - 1e-9)
                && q.iter().all(|&v| v >= bounds.lower - 1e-9 && v <= bounds.upper + 1e-9);
            if !feasible {
                continue;
            }
            let obj: f64 = q.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
            if best.as_ref().map_or(true, |(b, _)| obj < *b) {
                best = Some((obj, q));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn pava_matches_exhaustive_enumeration() {
        let mut rng = StdRng::seed_from_u64(7);
        let b = SupportBounds::new(0.0, 1.0).unwrap();
        for _ in 0..5 {
            let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..1.5)).collect();
            let oracle = pava_clip_oracle(&a, &b).unwrap();
            let brute = exhaustive_oracle(&a, &b);
            assert!(max_gap(&oracle, &brute) < 1e-10, "a={a:?}");
        }
    }

    #[test]
    fn solver_matches_oracle_random() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..300 {
            let m = rng.gen_range(1..=60);
            let a: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            let b = random_bounds(&mut rng);
            let r = project_monotone(&a, &b, None).unwrap();
            let oracle = pava_clip_oracle(&a, &b).unwrap();
            assert!(max_gap(&r.q, &oracle) <= 1e-10, "m={m} a={a:?} b={b:?}");
            // Solution invariants.
            assert!(r.q.windows(2).all(|w| w[1] >= w[0] - 1e-12));
            assert!(r.q.iter().all(|&v| v >= b.lower && v <= b.upper));
            assert!(r.dual.iter().all(|&v| v >= -1e-10));
        }
    }

    #[test]
    fn idempotent_on_feasible_input() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..50 {
            let m = rng.gen_range(1..=20);
            let a: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            let b = random_bounds(&mut rng);
            let q = project_monotone(&a, &b, None).unwrap().q;
            let again = project_monotone(&q, &b, None).unwrap();
            assert!(max_gap(&again.q, &q) < 1e-12);
            assert_eq!(again.iterations, 0);
        }
    }

    #[test]
    fn non_expansive() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let m = rng.gen_range(1..=30);
            let a: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            let b_vec: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            let bounds = random_bounds(&mut rng);
            let pa = project_monotone(&a, &bounds, None).unwrap().q;
            let pb = project_monotone(&b_vec, &bounds, None).unwrap().q;
            let d_out: f64 = pa
                .iter()
                .zip(&pb)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            let d_in: f64 = a
                .iter()
                .zip(&b_vec)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(d_out <= d_in + 1e-12);
        }
    }

    #[test]
    fn warm_start_matches_cold_for_any_warm_set() {
        let mut rng = StdRng::seed_from_u64(99);
        for _ in 0..200 {
            let m = rng.gen_range(1..=25);
            let a: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            let b = random_bounds(&mut rng);
            let cold = project_monotone(&a, &b, None).unwrap();
            // Adversarial random warm set over the full index range.
            let warm_set =
                ActiveSet::from_indices((0..=m).filter(|_| rng.gen_bool(0.4)));
            let warm = project_monotone(&a, &b, Some(&warm_set)).unwrap();
            assert!(max_gap(&warm.q, &cold.q) <= 1e-10);
            // The true final set must reproduce the answer immediately.
            let exact = project_monotone(&a, &b, Some(&cold.active)).unwrap();
            assert!(max_gap(&exact.q, &cold.q) <= 1e-10);
            assert_eq!(exact.iterations, 0);
        }
    }

    #[test]
    fn warm_start_efficiency_on_perturbed_problems() {
        let mut rng = StdRng::seed_from_u64(1234);
        let mut cold_iters = Vec::new();
        let mut warm_iters = Vec::new();
        for _ in 0..150 {
            let m = rng.gen_range(5..=80);
            let a: Vec<f64> = (0..m).map(|_| normal(&mut rng)).collect();
            let b = random_bounds(&mut rng);
            let base = project_monotone(&a, &b, None).unwrap();
            let perturbed: Vec<f64> = a
                .iter()
                .map(|v| v + rng.gen_range(-1e-3..1e-3))
                .collect();
            cold_iters.push(project_monotone(&perturbed, &b, None).unwrap().iterations);
            warm_iters.push(
                project_monotone(&perturbed, &b, Some(&base.active))
                    .unwrap()
                    .iterations,
            );
        }
        cold_iters.sort_unstable();
        warm_iters.sort_unstable();
        let median = |v: &[usize]| v[v.len() / 2];
        assert!(median(&warm_iters) <= median(&cold_iters));
    }

    #[test]
    fn active_set_serializes_as_sorted_array() {
        let s = ActiveSet::from_indices([5, 1, 3]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[1,3,5]");
    }

    #[test]
    fn jacobian_averages_unpinned_blocks_and_zeroes_pinned() {
        let b = SupportBounds::new(0.0, f64::INFINITY).unwrap();
        // Blocks {0,1} pinned to lower, {2,3} free, {4} free.
        let active = ActiveSet::from_indices([0, 1, 3]);
        let v = [1.0, 3.0, 2.0, 4.0, 10.0];
        let out = apply_active_jacobian(5, &b, &active, &v);
        assert_eq!(out, vec![0.0, 0.0, 3.0, 3.0, 10.0]);
    }
}
