use std::collections::BTreeMap;

use super::WhittleNetwork;
use crate::env::StateId;
use crate::error::{Error, Result};
use crate::learners::{full_gradient_term, OffsetFn, QCache, QNetwork, StepSchedule};
use crate::nn::{axpy_in_place, ParamVector};
use crate::replay::ReplayBuffer;
use crate::rng::Rng;

/// Coupled parameters of the shared Q-network (`theta`) and index network (`sigma`).
#[derive(Debug, Clone)]
pub struct WhittleLearner {
    pub theta: ParamVector,
    pub sigma: ParamVector,
    /// Target Q-network for the semi-gradient variant.
    pub target: Option<ParamVector>,
    pub target_sync_period: u64,
    pub offset: OffsetFn,
    /// Fast schedule `a(n)` for `theta`.
    pub q_schedule: StepSchedule,
    /// Slow schedule `b(n)` for `sigma`.
    pub sigma_schedule: StepSchedule,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WhittleStepReport {
    pub loss: f64,
    pub step_size: f64,
}

/// Per reference state: its subsidy, offset value and memoized Q-values.
struct RefContext {
    lambda: f64,
    offset: f64,
    cache: QCache,
    td_sum: f64,
}

impl WhittleLearner {
    pub fn new(
        theta: ParamVector,
        sigma: ParamVector,
        offset: OffsetFn,
        q_schedule: StepSchedule,
        sigma_schedule: StepSchedule,
    ) -> Self {
        Self { theta, sigma, target: None, target_sync_period: 0, offset, q_schedule, sigma_schedule, n: 0 }
    }

    pub fn with_target_network(mut self, sync_period: u64) -> Self {
        self.target = Some(self.theta.clone());
        self.target_sync_period = sync_period.max(1);
        self
    }

    fn check(&self, q: &QNetwork, whittle: &WhittleNetwork, batch: usize) -> Result<()> {
        if batch == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if q.extra_inputs() != 1 {
            return Err(Error::InvalidArgument("Whittle Q-network needs exactly one subsidy input".into()));
        }
        q.check_params(&self.theta)?;
        if self.sigma.len() != whittle.num_params() {
            return Err(Error::DimensionMismatch { what: "index network parameters", expected: whittle.num_params(), got: self.sigma.len() });
        }
        self.offset.validate(q)
    }

    fn contexts(
        &self,
        q: &QNetwork,
        whittle: &WhittleNetwork,
        refs: &[StateId],
        params: &ParamVector,
    ) -> BTreeMap<StateId, RefContext> {
        let mut out = BTreeMap::new();
        for &k in refs {
            out.entry(k).or_insert_with(|| {
                let lambda = whittle.index(&self.sigma, k);
                RefContext {
                    lambda,
                    offset: self.offset.value(q, params, &[lambda]),
                    cache: QCache::new(q.num_states()),
                    td_sum: 0.0,
                }
            });
        }
        out
    }

    /// Full-gradient Q step with subsidy-modified rewards.
    ///
    /// Each batch element `b` pairs a sampled transition with a reference state
    /// `k_b`; the subsidy `lambda(k_b; sigma)` enters the Q-network as a constant
    /// input and the TD error is averaged over stored transitions sharing
    /// `(x_b, u_b)`, all evaluated at that same subsidy.
    pub fn q_step(
        &mut self,
        q: &QNetwork,
        whittle: &WhittleNetwork,
        buffer: &ReplayBuffer,
        batch: usize,
        rng: &mut Rng,
    ) -> Result<WhittleStepReport> {
        self.check(q, whittle, batch)?;
        let a = self.q_schedule.rate(self.n);
        let samples = buffer.sample_uniform(batch, rng)?;
        let refs = buffer.sample_states(batch, rng)?;
        let mut ctx = self.contexts(q, whittle, &refs, &self.theta);
        let mut grad = vec![0.0; self.theta.len()];
        let mut sum_e2 = 0.0;
        for (t, k) in samples.iter().zip(&refs) {
            let c = ctx.get_mut(k).expect("context built for every reference");
            let passive = 1.0 - t.action.0 as f64;
            let e = full_gradient_term(
                q,
                &self.theta,
                buffer,
                t,
                &[c.lambda],
                c.offset - passive * c.lambda,
                &mut c.cache,
                &mut grad,
            );
            c.td_sum += e;
            sum_e2 += e * e;
        }
        for c in ctx.values() {
            self.offset.accumulate_grad(q, &self.theta, &[c.lambda], -c.td_sum, &mut grad);
        }
        let loss = sum_e2 / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("loss became {loss}")));
        }
        axpy_in_place(&mut self.theta, -a / batch as f64, &grad)?;
        self.n += 1;
        Ok(WhittleStepReport { loss, step_size: a })
    }

    /// Semi-gradient Q step against the target network, same subsidy handling as [`Self::q_step`].
    pub fn dqn_step(
        &mut self,
        q: &QNetwork,
        whittle: &WhittleNetwork,
        buffer: &ReplayBuffer,
        batch: usize,
        rng: &mut Rng,
    ) -> Result<WhittleStepReport> {
        self.check(q, whittle, batch)?;
        let target = self
            .target
            .clone()
            .ok_or_else(|| Error::UnsupportedMode("semi-gradient step without target network".into()))?;
        let a = self.q_schedule.rate(self.n);
        let samples = buffer.sample_uniform(batch, rng)?;
        let refs = buffer.sample_states(batch, rng)?;
        let mut frozen = self.contexts(q, whittle, &refs, &target);
        let mut online: BTreeMap<StateId, QCache> = BTreeMap::new();
        let mut grad = vec![0.0; self.theta.len()];
        let mut sum_sq = 0.0;
        for (t, k) in samples.iter().zip(&refs) {
            let c = frozen.get_mut(k).expect("context built for every reference");
            let lambda = c.lambda;
            let passive = 1.0 - t.action.0 as f64;
            let z = t.reward + passive * lambda + c.cache.max(q, &target, t.next_state, &[lambda]).1 - c.offset;
            let cache = online.entry(*k).or_insert_with(|| QCache::new(q.num_states()));
            let td = z - cache.get(q, &self.theta, t.state, &[lambda])[t.action.0];
            sum_sq += td * td;
            q.accumulate_grad(&self.theta, t.state, t.action, &[lambda], td, &mut grad);
        }
        let loss = sum_sq / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("loss became {loss}")));
        }
        axpy_in_place(&mut self.theta, a / batch as f64, &grad)?;
        self.n += 1;
        if self.n.is_multiple_of(self.target_sync_period) {
            self.target = Some(self.theta.clone());
        }
        Ok(WhittleStepReport { loss, step_size: a })
    }

    /// Mean squared active/passive gap `(Q(k,1,lambda(k)) - Q(k,0,lambda(k)))^2` over `refs`.
    pub fn gap_loss(&self, q: &QNetwork, whittle: &WhittleNetwork, refs: &[StateId]) -> f64 {
        refs.iter()
            .map(|&k| {
                let lambda = whittle.index(&self.sigma, k);
                let v = q.q_values(&self.theta, k, &[lambda]);
                (v[1] - v[0]).powi(2)
            })
            .sum::<f64>()
            / refs.len().max(1) as f64
    }

    /// Gradient of the mean squared gap over `refs` with respect to `sigma`,
    /// flowing through the subsidy input of the Q-network. Returns `(loss, grad)`.
    pub fn gap_loss_grad(&self, q: &QNetwork, whittle: &WhittleNetwork, refs: &[StateId]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.sigma.len()];
        let mut loss = 0.0;
        let scale = 1.0 / refs.len().max(1) as f64;
        for &k in refs {
            let lambda = whittle.index(&self.sigma, k);
            let (v, dv) = q.extra_input_grads(&self.theta, k, &[lambda]);
            let gap = v[1] - v[0];
            loss += gap * gap * scale;
            whittle.accumulate_grad(&self.sigma, k, 2.0 * gap * (dv[1] - dv[0]) * scale, &mut grad);
        }
        (loss, grad)
    }

    /// Slow-timescale step `sigma -= b(n) * grad mean(gap^2)` with `theta` held fixed.
    /// Uses the current step count for `b(n)`; call after the Q step of the same iteration.
    pub fn sigma_step(&mut self, q: &QNetwork, whittle: &WhittleNetwork, refs: &[StateId]) -> Result<WhittleStepReport> {
        if refs.is_empty() {
            return Err(Error::InvalidArgument("sigma step needs at least one reference state".into()));
        }
        if self.sigma.len() != whittle.num_params() {
            return Err(Error::DimensionMismatch { what: "index network parameters", expected: whittle.num_params(), got: self.sigma.len() });
        }
        let b = self.sigma_schedule.rate(self.n.saturating_sub(1));
        let (loss, grad) = self.gap_loss_grad(q, whittle, refs);
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("gap loss became {loss}")));
        }
        axpy_in_place(&mut self.sigma, -b, &grad)?;
        Ok(WhittleStepReport { loss, step_size: b })
    }
}
