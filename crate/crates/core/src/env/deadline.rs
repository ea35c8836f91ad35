//! Deadline scheduling of a single charging slot.
//!
//! State `(D, B)` is the remaining deadline and the remaining charge of the job
//! in the slot; `D = 0` means the slot is empty. Charging (active) delivers one
//! unit when `B > 0` and earns `1 - cost`. When the last slot `D = 1` is played
//! the job leaves and any residual charge `B'` costs `penalty * B'^2`. A new job
//! arrives into an empty slot with probability `arrival_prob`, its deadline and
//! load drawn uniformly from `1..=d_max` and `1..=b_max`.

use serde::Deserialize;

use super::{Environment, FeatureTable, TabularModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeadlineParams {
    pub d_max: usize,
    pub b_max: usize,
    pub arrival_prob: f64,
    pub cost: f64,
    pub penalty: f64,
}

impl DeadlineParams {
    pub fn small() -> Self {
        Self { d_max: 12, b_max: 9, arrival_prob: 0.3, cost: 0.5, penalty: 0.2 }
    }

    pub fn large() -> Self {
        Self { d_max: 50, b_max: 45, ..Self::small() }
    }

    pub fn num_states(&self) -> usize {
        (self.d_max + 1) * (self.b_max + 1)
    }

    pub fn index(&self, d: usize, b: usize) -> usize {
        d * (self.b_max + 1) + b
    }

    pub fn tuple(&self, state: usize) -> (usize, usize) {
        (state / (self.b_max + 1), state % (self.b_max + 1))
    }
}

impl Default for DeadlineParams {
    fn default() -> Self {
        Self::small()
    }
}

pub fn build(key: &str, params: &DeadlineParams) -> Result<Environment> {
    if params.d_max == 0 || params.b_max == 0 {
        return Err(Error::InvalidConfig("deadline needs d_max, b_max >= 1".into()));
    }
    if !(0.0..=1.0).contains(&params.arrival_prob) {
        return Err(Error::InvalidConfig(format!("deadline arrival_prob {} not in [0,1]", params.arrival_prob)));
    }
    let n = params.num_states();
    let jobs = (params.d_max * params.b_max) as f64;
    let mut arrival = Vec::with_capacity(params.d_max * params.b_max + 1);
    if params.arrival_prob < 1.0 {
        arrival.push((params.index(0, 0), 1.0 - params.arrival_prob));
    }
    if params.arrival_prob > 0.0 {
        for d in 1..=params.d_max {
            for b in 1..=params.b_max {
                arrival.push((params.index(d, b), params.arrival_prob / jobs));
            }
        }
    }

    let mut rows = Vec::with_capacity(n * 2);
    let mut rewards = Vec::with_capacity(n * 2);
    let mut tuples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        let (d, b) = params.tuple(s);
        tuples.push(vec![d, b]);
        labels.push(format!("(D={d},B={b})"));
        for u in 0..2 {
            if d == 0 {
                rows.push(arrival.clone());
                rewards.push(0.0);
                continue;
            }
            let charge = u.min(b);
            let left = b - charge;
            let mut reward = (1.0 - params.cost) * charge as f64;
            if d > 1 {
                rows.push(vec![(params.index(d - 1, left), 1.0)]);
            } else {
                reward -= params.penalty * (left * left) as f64;
                rows.push(arrival.clone());
            }
            rewards.push(reward);
        }
    }
    let model = TabularModel::from_rows(n, 2, rows, rewards)?;
    let features = FeatureTable::tuple_normalized(&tuples, &[params.d_max, params.b_max]);
    Environment::new(key, model, features, labels)
}
