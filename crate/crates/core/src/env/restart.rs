//! Restart chain: the active action always resets to the first state and pays
//! `reward_base^(s+1)`; the passive action advances one state with probability
//! `advance_prob` (the last state stays put) and resets otherwise.

use serde::Deserialize;

use super::{Environment, FeatureTable, TabularModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestartParams {
    pub num_states: usize,
    pub advance_prob: f64,
    pub reward_base: f64,
}

impl Default for RestartParams {
    fn default() -> Self {
        Self { num_states: 5, advance_prob: 0.9, reward_base: 0.9 }
    }
}

pub fn build(params: &RestartParams) -> Result<Environment> {
    let n = params.num_states;
    if n < 2 {
        return Err(Error::InvalidConfig("restart needs at least 2 states".into()));
    }
    if !(0.0..=1.0).contains(&params.advance_prob) {
        return Err(Error::InvalidConfig(format!("restart advance_prob {} not in [0,1]", params.advance_prob)));
    }
    let q = params.advance_prob;
    let mut rows = Vec::with_capacity(n * 2);
    let mut rewards = Vec::with_capacity(n * 2);
    for s in 0..n {
        rows.push(vec![((s + 1).min(n - 1), q), (0, 1.0 - q)]);
        rows.push(vec![(0, 1.0)]);
        rewards.push(0.0);
        rewards.push(params.reward_base.powi(s as i32 + 1));
    }
    let model = TabularModel::from_rows(n, 2, rows, rewards)?;
    let labels = (1..=n).map(|s| s.to_string()).collect();
    Environment::new("restart", model, FeatureTable::one_hot(n), labels)
}
