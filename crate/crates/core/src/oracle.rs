//! Exact tabular solvers used as ground truth.

use nalgebra::{DMatrix, DVector};

use crate::env::{StateId, TabularModel};
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Mixing weight of the aperiodicity transform `P' = tau P + (1 - tau) I`,
/// which keeps the bias and rescales the gain by `tau`.
const APERIODICITY: f64 = 0.5;

/// Optimal gain, relative values (anchored at zero) and Q-values of an average-reward MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub beta: f64,
    pub v: Vec<f64>,
    /// `q[i][u] = r(i,u) - beta + sum_j p(j|i,u) v(j)`.
    pub q: Vec<Vec<f64>>,
    /// `max_i |v(i) - max_u q[i][u]|`.
    pub residual: f64,
    pub iterations: usize,
    pub anchor: usize,
}

impl OracleSolution {
    /// Greedy actions, smallest index on ties.
    pub fn greedy_policy(&self) -> Vec<usize> {
        self.q.iter().map(|row| crate::nn::argmax(row)).collect()
    }
}

fn bellman(model: &TabularModel, v: &[f64], i: usize, u: usize) -> f64 {
    model.reward(i, u) + model.row(i, u).iter().map(|&(j, p)| p * v[j]).sum::<f64>()
}

fn bellman_max(model: &TabularModel, v: &[f64], i: usize) -> f64 {
    (0..model.num_actions()).map(|u| bellman(model, v, i, u)).fold(f64::NEG_INFINITY, f64::max)
}

/// Relative value iteration anchored at state 0.
pub fn relative_value_iteration(model: &TabularModel, tol: f64, max_iter: usize) -> Result<OracleSolution> {
    relative_value_iteration_anchored(model, tol, max_iter, 0)
}

/// Relative value iteration with span-seminorm stopping: iterates until
/// `span(T v - v) < tol`, which also brackets the gain to within `tol`.
pub fn relative_value_iteration_anchored(
    model: &TabularModel,
    tol: f64,
    max_iter: usize,
    anchor: usize,
) -> Result<OracleSolution> {
    let n = model.num_states();
    if anchor >= n {
        return Err(Error::InvalidArgument(format!("anchor {anchor} out of range")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut span = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let tv = bellman_max(model, &v, i);
            let diff = tv - v[i];
            lo = lo.min(diff);
            hi = hi.max(diff);
            next[i] = APERIODICITY * tv + (1.0 - APERIODICITY) * v[i];
        }
        span = hi - lo;
        let shift = next[anchor];
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni - shift;
        }
        if !span.is_finite() {
            break;
        }
        if span < tol {
            break;
        }
    }
    if !(span < tol) {
        return Err(Error::NoConvergence { iterations, residual: span });
    }
    let beta = bellman_max(model, &v, anchor) - v[anchor];
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..model.num_actions()).map(|u| bellman(model, &v, i, u) - beta).collect())
        .collect();
    let residual = (0..n)
        .map(|i| (v[i] - q[i].iter().copied().fold(f64::NEG_INFINITY, f64::max)).abs())
        .fold(0.0, f64::max);
    Ok(OracleSolution { beta, v, q, residual, iterations, anchor })
}

/// Stationary distribution of the chain induced by a randomized policy
/// `policy[i][u] = phi(u | i)`.
pub fn stationary_distribution(model: &TabularModel, policy: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = model.num_states();
    if policy.len() != n {
        return Err(Error::DimensionMismatch { what: "policy", expected: n, got: policy.len() });
    }
    // rows 0..n-1: (P^T - I) pi = 0, last row replaced by sum(pi) = 1
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if policy[i].len() != model.num_actions() {
            return Err(Error::DimensionMismatch { what: "policy row", expected: model.num_actions(), got: policy[i].len() });
        }
        let mass: f64 = policy[i].iter().sum();
        if (mass - 1.0).abs() > 1e-9 || policy[i].iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidArgument(format!("policy row {i} is not a distribution")));
        }
        for (u, &w) in policy[i].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for &(j, p) in model.row(i, u) {
                a[(j, i)] += w * p;
            }
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;

    let lu = a.full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..n).map(|k| u[(k, k)].abs()).collect();
    let largest = diag.iter().copied().fold(0.0, f64::max);
    let smallest = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smallest > 1e-12 * largest.max(1.0)) {
        return Err(Error::SingularSystem(format!(
            "induced chain has no unique stationary distribution (pivot ratio {:e})",
            smallest / largest.max(f64::MIN_POSITIVE)
        )));
    }
    let pi = lu.solve(&b).ok_or_else(|| Error::SingularSystem("stationary system is singular".into()))?;
    Ok(pi.iter().copied().collect())
}

/// Long-run average reward `sum_i pi(i) sum_u phi(u|i) r(i,u)` of a randomized stationary policy.
pub fn policy_average_reward(model: &TabularModel, policy: &[Vec<f64>]) -> Result<f64> {
    let pi = stationary_distribution(model, policy)?;
    Ok(pi
        .iter()
        .zip(policy)
        .enumerate()
        .map(|(i, (&p, phi))| p * phi.iter().enumerate().map(|(u, &w)| w * model.reward(i, u)).sum::<f64>())
        .sum())
}

/// Deterministic policy as a randomized one.
pub fn deterministic_policy(actions: &[usize], num_actions: usize) -> Vec<Vec<f64>> {
    actions
        .iter()
        .map(|&a| {
            let mut row = vec![0.0; num_actions];
            row[a] = 1.0;
            row
        })
        .collect()
}

/// `Q_lambda(k, 1) - Q_lambda(k, 0)` with subsidy `lambda` added to the passive reward.
pub fn subsidy_gap(arm: &TabularModel, state: StateId, lambda: f64, tol: f64) -> Result<f64> {
    let sol = relative_value_iteration(&arm.with_action_bonus(0, lambda), tol, DEFAULT_MAX_ITER)?;
    Ok(sol.q[state.0][1] - sol.q[state.0][0])
}

fn check_arm(arm: &TabularModel) -> Result<()> {
    if arm.num_actions() != 2 {
        return Err(Error::InvalidArgument(format!("arm must have 2 actions, has {}", arm.num_actions())));
    }
    Ok(())
}

/// Subsidy bracket `[-(max|r| + 1), max|r| + 1]`.
pub fn default_bracket(arm: &TabularModel) -> (f64, f64) {
    let m = arm.max_abs_reward() + 1.0;
    (-m, m)
}

/// Whittle index of `state`: the passive subsidy at which both actions are
/// equally good, found by bisection on the subsidy gap.
pub fn whittle_index_exact(arm: &TabularModel, state: StateId, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    check_arm(arm)?;
    if state.0 >= arm.num_states() {
        return Err(Error::InvalidArgument(format!("state {} out of range", state.0)));
    }
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty bracket [{lo}, {hi}]")));
    }
    let inner_tol = (tol * 1e-2).max(1e-13);
    let gap = |lambda: f64| subsidy_gap(arm, state, lambda, inner_tol);
    let (mut lo, mut hi) = (lo, hi);
    let (g_lo, g_hi) = (gap(lo)?, gap(hi)?);
    if g_lo.abs() < tol {
        return Ok(lo);
    }
    if g_hi.abs() < tol {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::NotBracketed { lo, hi, gap_lo: g_lo, gap_hi: g_hi });
    }
    let lo_sign = g_lo.signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid)?;
        if g.abs() < tol || hi - lo < f64::EPSILON * mid.abs().max(1.0) {
            return Ok(mid);
        }
        if g.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Whittle indices of every state, widening the default bracket if needed.
pub fn whittle_indices(arm: &TabularModel, tol: f64) -> Result<Vec<f64>> {
    check_arm(arm)?;
    let (lo0, hi0) = default_bracket(arm);
    (0..arm.num_states())
        .map(|k| {
            let (mut lo, mut hi) = (lo0, hi0);
            loop {
                match whittle_index_exact(arm, StateId(k), lo, hi, tol) {
                    Err(Error::NotBracketed { .. }) if hi - lo < 1e6 => {
                        lo *= 4.0;
                        hi *= 4.0;
                    }
                    other => return other,
                }
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexabilityReport {
    pub indexable: bool,
    /// Passive-optimal states at each grid subsidy, in grid order.
    pub trace: Vec<(f64, Vec<StateId>)>,
}

/// Checks that the passive-optimal set grows monotonically along a sorted subsidy grid.
pub fn indexability_check(arm: &TabularModel, grid: &[f64]) -> Result<IndexabilityReport> {
    check_arm(arm)?;
    let mut lambdas = grid.to_vec();
    lambdas.sort_by(f64::total_cmp);
    let mut trace = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let sol = relative_value_iteration(&arm.with_action_bonus(0, lambda), 1e-11, DEFAULT_MAX_ITER)?;
        let passive = (0..arm.num_states())
            .filter(|&k| sol.q[k][0] >= sol.q[k][1] - 1e-9)
            .map(StateId)
            .collect::<Vec<_>>();
        trace.push((lambda, passive));
    }
    let indexable = trace.windows(2).all(|w| w[0].1.iter().all(|s| w[1].1.contains(s)));
    Ok(IndexabilityReport { indexable, trace })
}

/// Evenly spaced subsidies over the default bracket.
pub fn default_grid(arm: &TabularModel, points: usize) -> Vec<f64> {
    let (lo, hi) = default_bracket(arm);
    let points = points.max(2);
    (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect()
}
