use super::{check_batch, full_gradient_term, OffsetFn, QCache, QNetwork, StepReport, StepSchedule};
use crate::error::{Error, Result};
use crate::nn::{axpy_in_place, ParamVector};
use crate::replay::ReplayBuffer;
use crate::rng::Rng;

/// RVI Q-learning state: the offset `f(Q)` plays the role of the average reward.
#[derive(Debug, Clone)]
pub struct RviLearner {
    pub theta: ParamVector,
    /// Target network, present for the semi-gradient variant only.
    pub target: Option<ParamVector>,
    pub offset: OffsetFn,
    pub schedule: StepSchedule,
    pub n: u64,
    pub target_sync_period: u64,
}

impl RviLearner {
    pub fn full_gradient(theta: ParamVector, offset: OffsetFn, schedule: StepSchedule) -> Self {
        Self { theta, target: None, offset, schedule, n: 0, target_sync_period: 0 }
    }

    pub fn semi_gradient(theta: ParamVector, offset: OffsetFn, schedule: StepSchedule, target_sync_period: u64) -> Self {
        Self { target: Some(theta.clone()), theta, offset, schedule, n: 0, target_sync_period: target_sync_period.max(1) }
    }

    /// `f(Q; theta)` for the full-gradient learner, `f(Q; theta~)` for DQN.
    pub fn proxy(&self, q: &QNetwork) -> f64 {
        self.offset.value(q, self.target.as_ref().unwrap_or(&self.theta), &[])
    }

    /// One mini-batch full-gradient step:
    /// `theta -= a(n)/B * sum_b E_b * (grad max_v Q(x'_b, v) - grad f - grad Q(x_b, u_b))`,
    /// with `E_b` the TD error averaged over stored transitions sharing `(x_b, u_b)`.
    pub fn fgdqn_step(&mut self, q: &QNetwork, buffer: &ReplayBuffer, batch: usize, rng: &mut Rng) -> Result<StepReport> {
        check_batch(batch)?;
        self.offset.validate(q)?;
        q.check_params(&self.theta)?;
        let a = self.schedule.rate(self.n);
        let f = self.offset.value(q, &self.theta, &[]);
        let samples = buffer.sample_uniform(batch, rng)?;
        let mut grad = vec![0.0; self.theta.len()];
        let mut cache = QCache::new(q.num_states());
        let (mut sum_e, mut sum_e2) = (0.0, 0.0);
        for t in &samples {
            let e = full_gradient_term(q, &self.theta, buffer, t, &[], f, &mut cache, &mut grad);
            sum_e += e;
            sum_e2 += e * e;
        }
        self.offset.accumulate_grad(q, &self.theta, &[], -sum_e, &mut grad);
        let loss = sum_e2 / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NumericOverflow(format!("loss became {loss}")));
        }
        axpy_in_place(&mut self.theta, -a / batch as f64, &grad)?;
        self.n += 1;
        Ok(StepReport { loss, proxy: f, step_size: a })
    }

    /// One mini-batch semi-gradient step chasing the frozen target
    /// `Z = r + max_v Q(x', v; theta~) - f(Q; theta~)`.
    pub fn dqn_step(&mut self, q: &QNetwork, buffer: &ReplayBuffer, batch: usize, rng: &mut Rng) -> Result<StepReport> {
        check_batch(batch)?;
        self.offset.validate(q)?;
        q.check_params(&self.theta)?;
        let target = self
            .target
            .as_ref()
            .ok_or_else(|| Error::UnsupportedMode("semi-gradient step on a learner without target network".into()))?;
        let a = self.schedule.rate(self.n);
        let f_target = self.offset.value(q, target, &[]);
        let samples = buffer.sample_uniform(batch, rng)?;
        let mut grad = vec![0.0; self.theta.len()];
        let mut online = QCache::new(q.num_states());
        let mut frozen = QCache::new(q.num_states());
        let mut sum_sq = 0.0;
        for t in &samples {
            let z = t.reward + frozen.max(q, target, t.next_state, &[]).1 - f_target;
            let td = z - online.get(q, &self.theta, t.state, &[])[t.action.0];
            sum_sq += td * td;
            q.accumulate_grad(&self.theta, t.state, t.action, &[], td, &mut grad);
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
        Ok(StepReport { loss, proxy: f_target, step_size: a })
    }
}
