use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Exact transition kernel and reward table of a finite controlled Markov chain.
///
/// Rows are stored sparsely: for every `(state, action)` only the successors with
/// positive probability are kept, in increasing state order.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    num_states: usize,
    num_actions: usize,
    rows: Vec<Vec<(usize, f64)>>,
    rewards: Vec<f64>,
}

impl TabularModel {
    /// Builds a model from per-`(state, action)` successor lists. Duplicate successors are merged.
    pub fn from_rows(
        num_states: usize,
        num_actions: usize,
        rows: Vec<Vec<(usize, f64)>>,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidArgument("model needs at least one state and action".into()));
        }
        let pairs = num_states * num_actions;
        if rows.len() != pairs {
            return Err(Error::DimensionMismatch { what: "model rows", expected: pairs, got: rows.len() });
        }
        if rewards.len() != pairs {
            return Err(Error::DimensionMismatch { what: "model rewards", expected: pairs, got: rewards.len() });
        }
        let mut merged = Vec::with_capacity(pairs);
        for (idx, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            let mut out: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, p) in row {
                if j >= num_states {
                    return Err(Error::InvalidArgument(format!("successor {j} out of range in row {idx}")));
                }
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidArgument(format!("probability {p} out of range in row {idx}")));
                }
                if p == 0.0 {
                    continue;
                }
                match out.last_mut() {
                    Some(last) if last.0 == j => last.1 += p,
                    _ => out.push((j, p)),
                }
            }
            let total: f64 = out.iter().map(|e| e.1).sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "row {idx} (state {}, action {}) sums to {total}",
                    idx / num_actions,
                    idx % num_actions
                )));
            }
            merged.push(out);
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite reward {r}")));
        }
        Ok(Self { num_states, num_actions, rows: merged, rewards })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Successors of `(state, action)` with positive probability.
    pub fn row(&self, state: usize, action: usize) -> &[(usize, f64)] {
        &self.rows[state * self.num_actions + action]
    }

    /// `p(next | state, action)`.
    pub fn p(&self, state: usize, action: usize, next: usize) -> f64 {
        let row = self.row(state, action);
        row.binary_search_by_key(&next, |e| e.0).map(|i| row[i].1).unwrap_or(0.0)
    }

    pub fn reward(&self, state: usize, action: usize) -> f64 {
        self.rewards[state * self.num_actions + action]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.rewards.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }

    /// Draws a successor of `(state, action)`. Consumes exactly one uniform draw.
    pub fn sample_next(&self, state: usize, action: usize, rng: &mut Rng) -> usize {
        let row = self.row(state, action);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(j, p) in row {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.last().map(|e| e.0).expect("rows are non-empty")
    }

    /// Returns a copy with the reward of `action` shifted by `delta` in every state.
    pub fn with_action_bonus(&self, action: usize, delta: f64) -> Self {
        let mut out = self.clone();
        for s in 0..self.num_states {
            out.rewards[s * self.num_actions + action] += delta;
        }
        out
    }

    /// Returns a copy with every reward shifted by `delta`.
    pub fn with_reward_shift(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.rewards.iter_mut().for_each(|r| *r += delta);
        out
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.rewards.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}
