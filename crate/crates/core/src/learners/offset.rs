use serde::{Deserialize, Serialize};

use super::QNetwork;
use crate::env::{ActionId, StateId};
use crate::error::{Error, Result};
use crate::nn::{self, GradVector, ParamVector};
use crate::replay::ReplayBuffer;

/// Largest `|S| * |A|` for which the global offsets enumerate the table.
pub const ENUMERATION_LIMIT: usize = 4096;

/// Offset `f(Q)` standing in for the unknown optimal average reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OffsetFn {
    /// `Q(s0, u0)`.
    FixedSa { state: StateId, action: ActionId },
    /// `max_u Q(s0, u)`.
    MaxAtState { state: StateId },
    /// `max_{i,u} Q(i, u)`.
    GlobalMax,
    /// Mean of `Q(i, u)` over the whole table.
    Mean,
}

impl OffsetFn {
    pub fn validate(&self, q: &QNetwork) -> Result<()> {
        let in_range = |s: StateId| {
            if s.0 < q.num_states() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("offset anchor state {} out of range", s.0)))
            }
        };
        match *self {
            OffsetFn::FixedSa { state, action } => {
                in_range(state)?;
                if action.0 >= q.num_actions() {
                    return Err(Error::InvalidArgument(format!("offset anchor action {} out of range", action.0)));
                }
                Ok(())
            }
            OffsetFn::MaxAtState { state } => in_range(state),
            OffsetFn::GlobalMax | OffsetFn::Mean => {
                let pairs = q.num_states() * q.num_actions();
                if pairs > ENUMERATION_LIMIT {
                    Err(Error::UnsupportedOffset(format!(
                        "{self:?} needs to enumerate {pairs} state-action pairs (limit {ENUMERATION_LIMIT})"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// The maximizing `(state, action)` for the max kinds, smallest on ties.
    fn maximizer(&self, q: &QNetwork, theta: &ParamVector, extra: &[f64]) -> Option<(StateId, ActionId, f64)> {
        match *self {
            OffsetFn::MaxAtState { state } => {
                let v = q.q_values(theta, state, extra);
                let a = nn::argmax(&v);
                Some((state, ActionId(a), v[a]))
            }
            OffsetFn::GlobalMax => {
                let mut best: Option<(StateId, ActionId, f64)> = None;
                for s in 0..q.num_states() {
                    let v = q.q_values(theta, StateId(s), extra);
                    let a = nn::argmax(&v);
                    if best.is_none_or(|b| v[a] > b.2) {
                        best = Some((StateId(s), ActionId(a), v[a]));
                    }
                }
                best
            }
            _ => None,
        }
    }

    pub fn value(&self, q: &QNetwork, theta: &ParamVector, extra: &[f64]) -> f64 {
        match *self {
            OffsetFn::FixedSa { state, action } => q.q_values(theta, state, extra)[action.0],
            OffsetFn::MaxAtState { .. } | OffsetFn::GlobalMax => self.maximizer(q, theta, extra).expect("max kind").2,
            OffsetFn::Mean => {
                let total: f64 = (0..q.num_states()).flat_map(|s| q.q_values(theta, StateId(s), extra)).sum();
                total / (q.num_states() * q.num_actions()) as f64
            }
        }
    }

    /// `grad += scale * d f / d theta` (a Danskin subgradient for the max kinds).
    pub fn accumulate_grad(&self, q: &QNetwork, theta: &ParamVector, extra: &[f64], scale: f64, grad: &mut [f64]) {
        if scale == 0.0 {
            return;
        }
        match *self {
            OffsetFn::FixedSa { state, action } => q.accumulate_grad(theta, state, action, extra, scale, grad),
            OffsetFn::MaxAtState { .. } | OffsetFn::GlobalMax => {
                let (s, a, _) = self.maximizer(q, theta, extra).expect("max kind");
                q.accumulate_grad(theta, s, a, extra, scale, grad);
            }
            OffsetFn::Mean => {
                let w = scale / (q.num_states() * q.num_actions()) as f64;
                for s in 0..q.num_states() {
                    for a in 0..q.num_actions() {
                        q.accumulate_grad(theta, StateId(s), ActionId(a), extra, w, grad);
                    }
                }
            }
        }
    }

    pub fn grad(&self, q: &QNetwork, theta: &ParamVector, extra: &[f64]) -> GradVector {
        let mut g = vec![0.0; theta.len()];
        self.accumulate_grad(q, theta, extra, 1.0, &mut g);
        GradVector(g)
    }

    /// Anchor state, when the offset has one.
    pub fn anchor(&self) -> Option<StateId> {
        match *self {
            OffsetFn::FixedSa { state, .. } | OffsetFn::MaxAtState { state } => Some(state),
            _ => None,
        }
    }
}

/// `f(Q; theta)`.
pub fn offset_value(offset: &OffsetFn, q: &QNetwork, theta: &ParamVector) -> Result<f64> {
    offset.validate(q)?;
    q.check_params(theta)?;
    Ok(offset.value(q, theta, &[]))
}

/// `d f(Q; theta) / d theta`.
pub fn offset_grad(offset: &OffsetFn, q: &QNetwork, theta: &ParamVector) -> Result<GradVector> {
    offset.validate(q)?;
    q.check_params(theta)?;
    Ok(offset.grad(q, theta, &[]))
}

/// An offset kind whose anchor may be left for the replay buffer to decide.
///
/// A missing anchor resolves to the most frequent stored `(state, action)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OffsetSpec {
    FixedSa { state: Option<StateId>, action: Option<ActionId> },
    MaxAtState { state: Option<StateId> },
    GlobalMax,
    Mean,
}

impl Default for OffsetSpec {
    fn default() -> Self {
        OffsetSpec::FixedSa { state: None, action: None }
    }
}

impl OffsetSpec {
    /// Whether the anchor must be read off a filled buffer.
    pub fn needs_buffer(&self) -> bool {
        matches!(
            self,
            OffsetSpec::FixedSa { state: None, .. } | OffsetSpec::FixedSa { action: None, .. } | OffsetSpec::MaxAtState { state: None }
        )
    }

    /// Offset usable before warm-up; anchors default to `(0, 0)`.
    pub fn placeholder(&self) -> OffsetFn {
        match *self {
            OffsetSpec::FixedSa { state, action } => OffsetFn::FixedSa {
                state: state.unwrap_or(StateId(0)),
                action: action.unwrap_or(ActionId(0)),
            },
            OffsetSpec::MaxAtState { state } => OffsetFn::MaxAtState { state: state.unwrap_or(StateId(0)) },
            OffsetSpec::GlobalMax => OffsetFn::GlobalMax,
            OffsetSpec::Mean => OffsetFn::Mean,
        }
    }

    pub fn resolve(&self, buffer: &ReplayBuffer) -> Result<OffsetFn> {
        if !self.needs_buffer() {
            return Ok(self.placeholder());
        }
        let (s, u) = buffer.most_frequent_state_action()?;
        Ok(match *self {
            OffsetSpec::FixedSa { state, action } => OffsetFn::FixedSa {
                state: state.unwrap_or(s),
                action: action.unwrap_or(u),
            },
            OffsetSpec::MaxAtState { .. } => OffsetFn::MaxAtState { state: s },
            other => other.placeholder(),
        })
    }
}
