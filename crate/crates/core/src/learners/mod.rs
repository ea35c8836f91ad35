//! Average-reward Q-learning updates with neural function approximation.
//!
//! Four rules are provided: RVI Q-learning and Differential Q-learning, each in
//! a full-gradient form (descent on the Bellman error, differentiating through
//! the bootstrap term) and a semi-gradient DQN form with a target network.

mod diffq;
mod offset;
mod qnet;
mod rvi;
mod schedule;

pub use diffq::{AverageRewardMode, DiffQLearner};
pub use offset::{offset_grad, offset_value, OffsetFn, OffsetSpec, ENUMERATION_LIMIT};
pub use qnet::QNetwork;
pub use rvi::RviLearner;
pub use schedule::{EpsilonSchedule, StepSchedule};

pub(crate) use qnet::QCache;

use crate::env::Transition;
use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::replay::ReplayBuffer;

/// What one gradient step reports for the metrics log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Mean squared (averaged) TD error over the batch.
    pub loss: f64,
    /// Average-reward proxy: `f(Q)` for RVI, `R̄` for Differential Q-learning.
    pub proxy: f64,
    pub step_size: f64,
}

pub(crate) fn check_batch(batch: usize) -> Result<()> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    Ok(())
}

/// Conditional-averaged TD error of one sampled transition, plus its
/// contribution `E * (grad max_v Q(x', v) - grad Q(x, u))` to `grad`.
///
/// `offset` is everything subtracted from the bootstrap target that is constant
/// across the `(x, u)` group. When the group is missing from the index (it can
/// only happen if the caller sampled from elsewhere) the live transition alone
/// is used.
#[allow(clippy::too_many_arguments)]
pub(crate) fn full_gradient_term(
    q: &QNetwork,
    theta: &ParamVector,
    buffer: &ReplayBuffer,
    t: &Transition,
    extra: &[f64],
    offset: f64,
    cache: &mut QCache,
    grad: &mut [f64],
) -> f64 {
    let q_xu = cache.get(q, theta, t.state, extra)[t.action.0];
    let e = match buffer.conditional_td_average(t.state, t.action, q_xu, offset, |y| cache.max(q, theta, y, extra).1) {
        Ok(e) => e,
        Err(_) => t.reward + cache.max(q, theta, t.next_state, extra).1 - offset - q_xu,
    };
    let (v, _) = cache.max(q, theta, t.next_state, extra);
    q.accumulate_grad(theta, t.next_state, v, extra, e, grad);
    q.accumulate_grad(theta, t.state, t.action, extra, -e, grad);
    e
}
