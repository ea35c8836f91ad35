//! Forest management: the stand ages by one each step under `wait` unless a
//! fire (probability `fire_prob`) resets it; `cut` resets it and sells the wood.

use serde::Deserialize;

use super::{Environment, FeatureTable, TabularModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub ages: usize,
    pub fire_prob: f64,
    /// Reward for waiting in the oldest age class.
    pub wait_reward: f64,
    /// Reward for cutting in the oldest age class.
    pub cut_reward: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { ages: 7, fire_prob: 0.1, wait_reward: 4.0, cut_reward: 2.0 }
    }
}

pub fn build(params: &ForestParams) -> Result<Environment> {
    let n = params.ages;
    if n < 2 {
        return Err(Error::InvalidConfig("forest needs at least 2 age classes".into()));
    }
    if !(0.0..=1.0).contains(&params.fire_prob) {
        return Err(Error::InvalidConfig(format!("forest fire_prob {} not in [0,1]", params.fire_prob)));
    }
    let p = params.fire_prob;
    let mut rows = Vec::with_capacity(n * 2);
    let mut rewards = Vec::with_capacity(n * 2);
    for s in 0..n {
        rows.push(vec![((s + 1).min(n - 1), 1.0 - p), (0, p)]);
        rows.push(vec![(0, 1.0)]);
        let oldest = s == n - 1;
        rewards.push(if oldest { params.wait_reward } else { 0.0 });
        rewards.push(if oldest { params.cut_reward } else if s == 0 { 0.0 } else { 1.0 });
    }
    let model = TabularModel::from_rows(n, 2, rows, rewards)?;
    let labels = (0..n).map(|s| format!("age={s}")).collect();
    Environment::new("forest", model, FeatureTable::one_hot(n), labels)
}
