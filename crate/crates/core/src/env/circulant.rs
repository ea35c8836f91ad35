//! Four-state circulant chain. Active pushes the state forward around the ring,
//! passive pushes it backward; either way the move happens with probability
//! `move_prob` and the state stays put otherwise. Rewards ignore the action.

use serde::Deserialize;

use super::{Environment, FeatureTable, TabularModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CirculantParams {
    pub move_prob: f64,
    pub rewards: [f64; 4],
}

impl Default for CirculantParams {
    fn default() -> Self {
        Self { move_prob: 0.5, rewards: [-1.0, 0.0, 0.0, 1.0] }
    }
}

pub fn build(params: &CirculantParams) -> Result<Environment> {
    if !(0.0..=1.0).contains(&params.move_prob) {
        return Err(Error::InvalidConfig(format!("circulant move_prob {} not in [0,1]", params.move_prob)));
    }
    let n = 4;
    let q = params.move_prob;
    let mut rows = Vec::with_capacity(n * 2);
    let mut rewards = Vec::with_capacity(n * 2);
    for s in 0..n {
        // passive
        rows.push(vec![((s + n - 1) % n, q), (s, 1.0 - q)]);
        // active
        rows.push(vec![((s + 1) % n, q), (s, 1.0 - q)]);
        rewards.extend([params.rewards[s]; 2]);
    }
    let model = TabularModel::from_rows(n, 2, rows, rewards)?;
    let labels = (1..=n).map(|s| s.to_string()).collect();
    Environment::new("circulant", model, FeatureTable::one_hot(n), labels)
}
