use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Step-size sequence `a(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `a0 / (1 + n / tau)^kappa`.
    PowerLaw { a0: f64, tau: f64, kappa: f64 },
    /// Fixed step; does not satisfy the Robbins-Monro conditions.
    Constant { a: f64 },
}

impl StepSchedule {
    pub fn rate(&self, n: u64) -> f64 {
        match *self {
            StepSchedule::PowerLaw { a0, tau, kappa } => a0 / (1.0 + n as f64 / tau).powf(kappa),
            StepSchedule::Constant { a } => a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StepSchedule::PowerLaw { a0, tau, kappa } => {
                if !(a0 >= 0.0 && a0.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidConfig(format!("power-law schedule needs a0 >= 0, tau > 0 (got {a0}, {tau})")));
                }
                if !(kappa > 0.0 && kappa <= 1.0) {
                    return Err(Error::InvalidConfig(format!("power-law exponent {kappa} outside (0, 1]")));
                }
                Ok(())
            }
            StepSchedule::Constant { a } if a >= 0.0 && a.is_finite() => Ok(()),
            StepSchedule::Constant { a } => Err(Error::InvalidConfig(format!("constant step {a} must be finite and >= 0"))),
        }
    }

    /// Whether `sum a(n) = inf` and `sum a(n)^2 < inf`.
    pub fn is_robbins_monro(&self) -> bool {
        match *self {
            StepSchedule::PowerLaw { a0, kappa, .. } => a0 > 0.0 && kappa > 0.5 && kappa <= 1.0,
            StepSchedule::Constant { .. } => false,
        }
    }

    /// Power-law decay exponent, if any.
    pub fn exponent(&self) -> Option<f64> {
        match *self {
            StepSchedule::PowerLaw { kappa, .. } => Some(kappa),
            StepSchedule::Constant { .. } => None,
        }
    }
}


/// Exploration probability decaying linearly from `start` to `end` over
/// `decay_steps` steps, then held at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self { start: epsilon, end: epsilon, decay_steps: 0 }
    }

    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.start) || !(0.0..=1.0).contains(&self.end) {
            return Err(Error::InvalidConfig(format!("epsilon {}..{} outside [0, 1]", self.start, self.end)));
        }
        Ok(())
    }
}
