use crate::env::{ActionId, Environment, FeatureTable, StateId};
use crate::error::{Error, Result};
use crate::nn::{self, MlpSpec, ParamVector};

/// A Q-network over a finite state space: state features, optionally followed
/// by extra real inputs (the Whittle learner appends the subsidy), map to one
/// value per action.
#[derive(Debug, Clone)]
pub struct QNetwork {
    spec: MlpSpec,
    features: FeatureTable,
    extra_inputs: usize,
}

impl QNetwork {
    pub fn new(spec: MlpSpec, features: FeatureTable, extra_inputs: usize) -> Result<Self> {
        let expected = features.dimension() + extra_inputs;
        if spec.input_dim != expected {
            return Err(Error::DimensionMismatch { what: "Q-network input", expected, got: spec.input_dim });
        }
        Ok(Self { spec, features, extra_inputs })
    }

    /// Network for `env` with the given hidden layers and no extra inputs.
    pub fn for_env(env: &Environment, hidden: Vec<usize>) -> Result<Self> {
        let spec = MlpSpec::new(env.features().dimension(), hidden, env.num_actions())?;
        Self::new(spec, env.features().clone(), 0)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn num_states(&self) -> usize {
        self.features.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.spec.output_dim
    }

    pub fn num_params(&self) -> usize {
        self.spec.num_params()
    }

    pub fn extra_inputs(&self) -> usize {
        self.extra_inputs
    }

    pub fn check_params(&self, theta: &ParamVector) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::DimensionMismatch { what: "parameter vector", expected: self.num_params(), got: theta.len() });
        }
        Ok(())
    }

    pub fn input(&self, state: StateId, extra: &[f64]) -> Vec<f64> {
        debug_assert_eq!(extra.len(), self.extra_inputs);
        let mut x = Vec::with_capacity(self.spec.input_dim);
        x.extend_from_slice(self.features.row(state.0));
        x.extend_from_slice(extra);
        x
    }

    pub fn q_values(&self, theta: &ParamVector, state: StateId, extra: &[f64]) -> Vec<f64> {
        let x = self.input(state, extra);
        nn::forward_trace(&self.spec, &theta.0, &x).output().to_vec()
    }

    pub fn greedy(&self, theta: &ParamVector, state: StateId, extra: &[f64]) -> ActionId {
        ActionId(nn::argmax(&self.q_values(theta, state, extra)))
    }

    /// `grad += scale * d Q(state, action) / d theta`.
    pub fn accumulate_grad(
        &self,
        theta: &ParamVector,
        state: StateId,
        action: ActionId,
        extra: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) {
        if scale == 0.0 {
            return;
        }
        let x = self.input(state, extra);
        let trace = nn::forward_trace(&self.spec, &theta.0, &x);
        let mut seed = vec![0.0; self.spec.output_dim];
        seed[action.0] = 1.0;
        nn::backprop(&self.spec, &theta.0, &trace, &seed, scale, Some(grad), None);
    }

    /// Gradients of both action values with respect to the last extra input.
    pub fn extra_input_grads(&self, theta: &ParamVector, state: StateId, extra: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let x = self.input(state, extra);
        let trace = nn::forward_trace(&self.spec, &theta.0, &x);
        let values = trace.output().to_vec();
        let mut grads = Vec::with_capacity(self.spec.output_dim);
        for u in 0..self.spec.output_dim {
            let mut seed = vec![0.0; self.spec.output_dim];
            seed[u] = 1.0;
            let mut g = vec![0.0; self.spec.input_dim];
            nn::backprop(&self.spec, &theta.0, &trace, &seed, 1.0, None, Some(&mut g));
            grads.push(*g.last().expect("non-empty input"));
        }
        (values, grads)
    }
}

/// Memoized action values of every state for one fixed `(theta, extra)`.
pub(crate) struct QCache {
    values: Vec<Option<Vec<f64>>>,
}

impl QCache {
    pub(crate) fn new(num_states: usize) -> Self {
        Self { values: vec![None; num_states] }
    }

    pub(crate) fn get(&mut self, q: &QNetwork, theta: &ParamVector, state: StateId, extra: &[f64]) -> &[f64] {
        self.values[state.0].get_or_insert_with(|| q.q_values(theta, state, extra))
    }

    pub(crate) fn max(&mut self, q: &QNetwork, theta: &ParamVector, state: StateId, extra: &[f64]) -> (ActionId, f64) {
        let v = self.get(q, theta, state, extra);
        let a = nn::argmax(v);
        (ActionId(a), v[a])
    }
}
