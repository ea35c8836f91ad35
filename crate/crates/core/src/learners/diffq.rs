use serde::{Deserialize, Serialize};

use super::{check_batch, full_gradient_term, QCache, QNetwork, StepReport, StepSchedule};
use crate::env::{ActionId, StateId, TabularModel};
use crate::error::{Error, Result};
use crate::nn::{axpy_in_place, GradVector, ParamVector};
use crate::replay::ReplayBuffer;
use crate::rng::Rng;

/// How the reward-rate estimate `R̄` (and its gradient proxy `Y`) are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AverageRewardMode {
    /// One successor drawn from the model for every `(s, a)`, averaged over the table.
    GenerativeSweep,
    /// Averaged over the sampled mini-batch; needs no model.
    ReplayBatch,
}

/// Differential Q-learning state.
#[derive(Debug, Clone)]
pub struct DiffQLearner {
    pub theta: ParamVector,
    pub r_bar: f64,
    /// Running estimate of `d R̄ / d theta`; identically zero for the semi-gradient variant.
    pub y: GradVector,
    pub eta: f64,
    pub schedule: StepSchedule,
    pub mode: AverageRewardMode,
    pub n: u64,
    /// Optional target network for the semi-gradient variant.
    pub target: Option<ParamVector>,
    pub target_sync_period: u64,
}

impl DiffQLearner {
    pub fn new(theta: ParamVector, r_bar: f64, eta: f64, schedule: StepSchedule, mode: AverageRewardMode) -> Self {
        let d = theta.len();
        Self { theta, r_bar, y: GradVector::zeros(d), eta, schedule, mode, n: 0, target: None, target_sync_period: 0 }
    }

    pub fn with_target_network(mut self, sync_period: u64) -> Self {
        self.target = Some(self.theta.clone());
        self.target_sync_period = sync_period.max(1);
        self
    }

    fn check(&self, q: &QNetwork, model: Option<&TabularModel>, batch: usize) -> Result<()> {
        check_batch(batch)?;
        q.check_params(&self.theta)?;
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidConfig(format!("eta must be finite and >= 0, got {}", self.eta)));
        }
        if self.mode == AverageRewardMode::GenerativeSweep {
            match model {
                None => return Err(Error::UnsupportedMode("generative-sweep needs a tabular model".into())),
                Some(m) if m.num_states() != q.num_states() || m.num_actions() != q.num_actions() => {
                    return Err(Error::DimensionMismatch { what: "tabular model states", expected: q.num_states(), got: m.num_states() })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    /// Sweeps every `(s, a)` once with a fresh successor: returns the summed TD
    /// error and, when `grad_sum` is given, accumulates
    /// `grad max Q(s', v) - grad Q(s, a)` into it.
    fn sweep(
        &self,
        q: &QNetwork,
        model: &TabularModel,
        rng: &mut Rng,
        cache: &mut QCache,
        mut grad_sum: Option<&mut [f64]>,
    ) -> (f64, usize) {
        let mut total = 0.0;
        for s in 0..model.num_states() {
            for a in 0..model.num_actions() {
                let next = StateId(model.sample_next(s, a, rng));
                let (v, boot) = cache.max(q, &self.theta, next, &[]);
                let q_sa = cache.get(q, &self.theta, StateId(s), &[])[a];
                total += model.reward(s, a) + boot - self.r_bar - q_sa;
                if let Some(g) = grad_sum.as_deref_mut() {
                    q.accumulate_grad(&self.theta, next, v, &[], 1.0, g);
                    q.accumulate_grad(&self.theta, StateId(s), ActionId(a), &[], -1.0, g);
                }
            }
        }
        (total, model.num_states() * model.num_actions())
    }

    /// `R̄ += eta a (mean TD)` and, for the full-gradient variant,
    /// `Y += eta a (mean(grad max Q(s') - grad Q(s, a)) - Y)`.
    fn apply_rate_update(&mut self, a: f64, td_sum: f64, grad_sum: Option<&[f64]>, count: usize) -> Result<()> {
        let w = self.eta * a / count as f64;
        self.r_bar += w * td_sum;
        if !self.r_bar.is_finite() {
            return Err(Error::NumericOverflow(format!("average-reward estimate became {}", self.r_bar)));
        }
        if let Some(g) = grad_sum {
            let keep = 1.0 - self.eta * a;
            for (y, gi) in self.y.0.iter_mut().zip(g) {
                *y = keep * *y + w * gi;
            }
            if self.y.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericOverflow("gradient proxy Y became non-finite".into()));
            }
        }
        Ok(())
    }

    /// Full-gradient step: `R̄` replaces the offset and `Y` replaces its gradient.
    pub fn fgdqn_step(
        &mut self,
        q: &QNetwork,
        buffer: &ReplayBuffer,
        model: Option<&TabularModel>,
        batch: usize,
        rng: &mut Rng,
    ) -> Result<StepReport> {
        self.check(q, model, batch)?;
        let a = self.schedule.rate(self.n);
        let r_bar = self.r_bar;
        let samples = buffer.sample_uniform(batch, rng)?;
        let d = self.theta.len();
        let mut grad = vec![0.0; d];
        let mut cache = QCache::new(q.num_states());
        let (mut sum_e, mut sum_e2) = (0.0, 0.0);
        for t in &samples {
            let e = full_gradient_term(q, &self.theta, buffer, t, &[], r_bar, &mut cache, &mut grad);
            sum_e += e;
            sum_e2 += e * e;
        }
        for (g, y) in grad.iter_mut().zip(&self.y.0) {
            *g -= sum_e * y;
        }

        let mut rate_grad = vec![0.0; d];
        let (td_sum, count) = match self.mode {
            AverageRewardMode::GenerativeSweep => {
                let model = model.expect("checked");
                self.sweep(q, model, rng, &mut cache, Some(&mut rate_grad))
            }
            AverageRewardMode::ReplayBatch => {
                let mut total = 0.0;
                for t in &samples {
                    let (v, boot) = cache.max(q, &self.theta, t.next_state, &[]);
                    total += t.reward + boot - r_bar - cache.get(q, &self.theta, t.state, &[])[t.action.0];
                    q.accumulate_grad(&self.theta, t.next_state, v, &[], 1.0, &mut rate_grad);
                    q.accumulate_grad(&self.theta, t.state, t.action, &[], -1.0, &mut rate_grad);
                }
                (total, samples.len())
            }
        };

        let loss = sum_e2 / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("loss became {loss}")));
        }
        axpy_in_place(&mut self.theta, -a / batch as f64, &grad)?;
        self.apply_rate_update(a, td_sum, Some(&rate_grad), count)?;
        self.n += 1;
        Ok(StepReport { loss, proxy: r_bar, step_size: a })
    }

    /// Semi-gradient step: `theta += a/B sum (r + max Q(x') - R̄ - Q(x, u)) grad Q(x, u)`.
    /// `Y` stays zero.
    pub fn dqn_step(
        &mut self,
        q: &QNetwork,
        buffer: &ReplayBuffer,
        model: Option<&TabularModel>,
        batch: usize,
        rng: &mut Rng,
    ) -> Result<StepReport> {
        self.check(q, model, batch)?;
        let a = self.schedule.rate(self.n);
        let r_bar = self.r_bar;
        let samples = buffer.sample_uniform(batch, rng)?;
        let mut grad = vec![0.0; self.theta.len()];
        let mut online = QCache::new(q.num_states());
        let mut frozen = QCache::new(q.num_states());
        let mut sum_sq = 0.0;
        let mut batch_td = 0.0;
        for t in &samples {
            let boot = match &self.target {
                Some(tgt) => frozen.max(q, tgt, t.next_state, &[]).1,
                None => online.max(q, &self.theta, t.next_state, &[]).1,
            };
            let q_xu = online.get(q, &self.theta, t.state, &[])[t.action.0];
            let td = t.reward + boot - r_bar - q_xu;
            sum_sq += td * td;
            q.accumulate_grad(&self.theta, t.state, t.action, &[], td, &mut grad);
            batch_td += t.reward + online.max(q, &self.theta, t.next_state, &[]).1 - r_bar - q_xu;
        }
        let (td_sum, count) = match self.mode {
            AverageRewardMode::GenerativeSweep => self.sweep(q, model.expect("checked"), rng, &mut online, None),
            AverageRewardMode::ReplayBatch => (batch_td, samples.len()),
        };
        let loss = sum_sq / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("loss became {loss}")));
        }
        axpy_in_place(&mut self.theta, a / batch as f64, &grad)?;
        self.apply_rate_update(a, td_sum, None, count)?;
        self.n += 1;
        if self.target.is_some() && self.n.is_multiple_of(self.target_sync_period) {
            self.target = Some(self.theta.clone());
        }
        Ok(StepReport { loss, proxy: r_bar, step_size: a })
    }
}
