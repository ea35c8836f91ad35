//! Access-control queuing: a pool of servers, customers of several priorities
//! arriving one per step at the head of the queue. Accepting a customer when a
//! server is free pays its priority; every busy server frees up independently
//! with probability `free_prob` per step.

use serde::Deserialize;

use super::{Environment, FeatureTable, TabularModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccessControlParams {
    pub servers: usize,
    pub priorities: Vec<f64>,
    pub free_prob: f64,
}

impl Default for AccessControlParams {
    fn default() -> Self {
        Self { servers: 10, priorities: vec![1.0, 2.0, 4.0, 8.0], free_prob: 0.06 }
    }
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    let mut coef = 1.0;
    for (k, slot) in pmf.iter_mut().enumerate() {
        if k > 0 {
            coef *= (n - k + 1) as f64 / k as f64;
        }
        *slot = coef * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    pmf
}

pub fn build(params: &AccessControlParams) -> Result<Environment> {
    let np = params.priorities.len();
    if params.servers == 0 || np == 0 {
        return Err(Error::InvalidConfig("access-control needs servers and priorities".into()));
    }
    if !(0.0..=1.0).contains(&params.free_prob) {
        return Err(Error::InvalidConfig(format!("access-control free_prob {} not in [0,1]", params.free_prob)));
    }
    let n = (params.servers + 1) * np;
    let index = |free: usize, k: usize| free * np + k;
    let pmfs: Vec<Vec<f64>> = (0..=params.servers).map(|busy| binomial_pmf(busy, params.free_prob)).collect();

    let mut rows = Vec::with_capacity(n * 2);
    let mut rewards = Vec::with_capacity(n * 2);
    let mut tuples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for s in 0..n {
        let (free, k) = (s / np, s % np);
        tuples.push(vec![free, k]);
        labels.push(format!("(free={free},prio={})", params.priorities[k]));
        for u in 0..2 {
            let accepted = u == 1 && free > 0;
            let free_after = if accepted { free - 1 } else { free };
            let busy = params.servers - free_after;
            let mut row = Vec::with_capacity((busy + 1) * np);
            for (freed, &pf) in pmfs[busy].iter().enumerate() {
                for k2 in 0..np {
                    row.push((index(free_after + freed, k2), pf / np as f64));
                }
            }
            rows.push(row);
            rewards.push(if accepted { params.priorities[k] } else { 0.0 });
        }
    }
    let model = TabularModel::from_rows(n, 2, rows, rewards)?;
    let features = FeatureTable::tuple_normalized(&tuples, &[params.servers, np.saturating_sub(1)]);
    Environment::new("access-control", model, features, labels)
}
