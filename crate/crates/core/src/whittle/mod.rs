//! Whittle index learning for restless bandits with statistically identical arms.
//!
//! A single Q-network `Q(x, u, lambda; theta)` is trained with the passive
//! reward raised by a subsidy `lambda = lambda(k; sigma)` evaluated at a
//! reference state `k`. On a slower step-size schedule the index network
//! `sigma` is moved to close the active/passive gap `Q(k, 1) - Q(k, 0)` at each
//! reference state. Acting ranks arms by their current index and activates the
//! top `M`.

mod learner;
mod trainer;

use rand::seq::index::sample;
use rand::Rng as _;

pub use learner::{WhittleLearner, WhittleStepReport};
pub use trainer::{evaluate_index_policy, RmabSettings, RmabStepReport, RmabTrainer, RmabVariant};

use crate::env::{ActionId, Environment, FeatureTable, StateId};
use crate::error::{Error, Result};
use crate::nn::{self, MlpSpec, ParamVector};
use crate::rng::Rng;

/// Maps a state's features to a scalar subsidy `lambda(k; sigma)`.
#[derive(Debug, Clone)]
pub struct WhittleNetwork {
    spec: MlpSpec,
    features: FeatureTable,
}

impl WhittleNetwork {
    pub fn new(features: FeatureTable, hidden: Vec<usize>) -> Result<Self> {
        let spec = MlpSpec::new(features.dimension(), hidden, 1)?;
        Ok(Self { spec, features })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn num_states(&self) -> usize {
        self.features.num_states()
    }

    pub fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    pub fn index(&self, sigma: &ParamVector, state: StateId) -> f64 {
        nn::forward_trace(&self.spec, &sigma.0, self.features.row(state.0)).output()[0]
    }

    /// `lambda(k; sigma)` for every state.
    pub fn table(&self, sigma: &ParamVector) -> Vec<f64> {
        (0..self.num_states()).map(|k| self.index(sigma, StateId(k))).collect()
    }

    /// `grad += scale * d lambda(state; sigma) / d sigma`.
    pub fn accumulate_grad(&self, sigma: &ParamVector, state: StateId, scale: f64, grad: &mut [f64]) {
        if scale == 0.0 {
            return;
        }
        let trace = nn::forward_trace(&self.spec, &sigma.0, self.features.row(state.0));
        nn::backprop(&self.spec, &sigma.0, &trace, &[1.0], scale, Some(grad), None);
    }
}

/// Passive reward raised by the subsidy:
/// `(1 - u) (r_passive(x) + lambda) + u r_active(x)`.
pub fn modified_reward(arm: &Environment, state: StateId, action: ActionId, lambda: f64) -> f64 {
    let u = action.0 as f64;
    (1.0 - u) * (arm.reward(state, ActionId::PASSIVE) + lambda) + u * arm.reward(state, ActionId::ACTIVE)
}

/// Indices of the `budget` largest values, ties going to the smaller arm index.
pub fn top_m(values: &[f64], budget: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(budget);
    order.sort_unstable();
    order
}

fn check_budget(arms: usize, budget: usize) -> Result<()> {
    if budget >= arms {
        return Err(Error::InvalidConfig(format!("budget M = {budget} must be smaller than N = {arms}")));
    }
    Ok(())
}

/// Activation vector with exactly `budget` ones.
///
/// With probability `epsilon` the active set is uniform over all budget-sized
/// subsets; otherwise the arms with the largest `index_of(state)` are activated.
pub fn index_policy(
    index_of: impl Fn(StateId) -> f64,
    states: &[StateId],
    budget: usize,
    epsilon: f64,
    rng: &mut Rng,
) -> Result<Vec<ActionId>> {
    check_budget(states.len(), budget)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    let mut actions = vec![ActionId::PASSIVE; states.len()];
    let explore = epsilon > 0.0 && rng.random::<f64>() < epsilon;
    let active = if explore {
        sample(rng, states.len(), budget).into_vec()
    } else {
        let values: Vec<f64> = states.iter().map(|&s| index_of(s)).collect();
        top_m(&values, budget)
    };
    for i in active {
        actions[i] = ActionId::ACTIVE;
    }
    Ok(actions)
}
