use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{self, EncodingMode, Environment, StateId};
use crate::error::{Error, Result};
use crate::learners::{AverageRewardMode, EpsilonSchedule, OffsetSpec, StepSchedule};
use crate::nn::MlpSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    RviFgdqn,
    RviDqn,
    DiffqFgdqn,
    DiffqDqn,
    WhittleFgdqn,
    WhittleDqn,
}

impl Algorithm {
    pub fn is_whittle(self) -> bool {
        matches!(self, Algorithm::WhittleFgdqn | Algorithm::WhittleDqn)
    }

    pub fn is_semi_gradient(self) -> bool {
        matches!(self, Algorithm::RviDqn | Algorithm::DiffqDqn | Algorithm::WhittleDqn)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSection {
    pub key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<EncodingMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<toml::Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Hidden widths of the Q-network; the environment default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<Vec<usize>>,
    /// Hidden widths of the index network (Whittle runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySection {
    pub capacity: usize,
    pub per_key_cap: usize,
    /// Transitions gathered under uniformly random actions before the first step.
    pub warmup: usize,
}

impl Default for ReplaySection {
    fn default() -> Self {
        Self { capacity: 100_000, per_key_cap: 256, warmup: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffQSection {
    pub eta: f64,
    pub mode: AverageRewardMode,
    pub r_bar_init: f64,
}

impl Default for DiffQSection {
    fn default() -> Self {
        Self { eta: 1.0, mode: AverageRewardMode::GenerativeSweep, r_bar_init: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Gradient steps between evaluations; 0 disables periodic evaluation.
    pub period: u64,
    pub horizon: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { period: 1000, horizon: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmabSection {
    pub arms: usize,
    pub budget: usize,
    /// States whose learned index is logged as `lambda_<state>` columns.
    #[serde(default)]
    pub probe_states: Vec<usize>,
}

/// A training run, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default = "default_batch")]
    pub batch: usize,
    /// Gradient steps between plain metrics rows.
    #[serde(default = "default_log_period")]
    pub log_period: u64,
    #[serde(default = "default_sync")]
    pub target_sync_period: u64,
    pub env: EnvSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default = "default_schedule")]
    pub schedule: StepSchedule,
    /// Slow schedule `b(n)` of the index network.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_schedule: Option<StepSchedule>,
    #[serde(default)]
    pub replay: ReplaySection,
    #[serde(default)]
    pub offset: OffsetSpec,
    #[serde(default)]
    pub diffq: DiffQSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<EpsilonSchedule>,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rmab: Option<RmabSection>,
}

fn default_batch() -> usize {
    32
}

fn default_log_period() -> u64 {
    100
}

fn default_sync() -> u64 {
    100
}

fn default_schedule() -> StepSchedule {
    StepSchedule::PowerLaw { a0: 0.05, tau: 1000.0, kappa: 0.6 }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seed list is empty".into()));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch must be positive".into()));
        }
        if self.log_period == 0 {
            return Err(Error::InvalidConfig("log_period must be positive".into()));
        }
        if self.eval.horizon == 0 {
            return Err(Error::InvalidConfig("eval horizon must be positive".into()));
        }
        if self.replay.capacity == 0 || self.replay.per_key_cap == 0 {
            return Err(Error::InvalidConfig("replay capacity and per-key cap must be positive".into()));
        }
        self.schedule.validate()?;
        if let Some(b) = &self.index_schedule {
            b.validate()?;
        }
        if let Some(eps) = &self.epsilon {
            eps.validate()?;
        }
        let env = self.environment()?;
        if let Some(hidden) = &self.network.hidden {
            MlpSpec::new(env.features().dimension(), hidden.clone(), env.num_actions())?;
        }
        if self.algorithm.is_whittle() {
            let rmab = self.rmab_section()?;
            if env.num_actions() != 2 {
                return Err(Error::InvalidConfig(format!("{} is not a two-action arm", env.key())));
            }
            if rmab.budget == 0 || rmab.budget >= rmab.arms {
                return Err(Error::InvalidConfig(format!("need 0 < budget < arms, got {} of {}", rmab.budget, rmab.arms)));
            }
            if let Some(&s) = rmab.probe_states.iter().find(|&&s| s >= env.num_states()) {
                return Err(Error::InvalidConfig(format!("probe state {s} out of range")));
            }
        }
        Ok(())
    }

    /// The configured environment with its encoding applied.
    pub fn environment(&self) -> Result<Environment> {
        let env = env::make(&self.env.key, self.env.params.as_ref())?;
        match self.env.encoding {
            Some(mode) => env.with_encoding(mode),
            None => Ok(env),
        }
    }

    pub fn hidden(&self, env: &Environment) -> Vec<usize> {
        self.network.hidden.clone().unwrap_or_else(|| MlpSpec::default_hidden(env.num_states()))
    }

    pub fn index_hidden(&self, env: &Environment) -> Vec<usize> {
        self.network.index_hidden.clone().unwrap_or_else(|| MlpSpec::default_hidden(env.num_states()))
    }

    /// `b(n)`: configured, or `a0 / 10` with an exponent between `a(n)`'s and 1.
    pub fn index_schedule(&self) -> StepSchedule {
        self.index_schedule.unwrap_or(match self.schedule {
            StepSchedule::PowerLaw { a0, tau, kappa } => StepSchedule::PowerLaw { a0: a0 / 10.0, tau, kappa: (kappa + 1.0) / 2.0 },
            StepSchedule::Constant { a } => StepSchedule::Constant { a: a / 10.0 },
        })
    }

    /// Exploration: 0.1 constant, or for Whittle runs 0.1 decaying to 0.01 over half the run.
    pub fn epsilon(&self) -> EpsilonSchedule {
        self.epsilon.unwrap_or(if self.algorithm.is_whittle() {
            EpsilonSchedule { start: 0.1, end: 0.01, decay_steps: self.total_steps / 2 }
        } else {
            EpsilonSchedule::constant(0.1)
        })
    }

    pub fn rmab_section(&self) -> Result<&RmabSection> {
        self.rmab.as_ref().ok_or_else(|| Error::InvalidConfig(format!("{:?} needs an [rmab] section", self.algorithm)))
    }

    /// Default evaluation horizon for index policies on this arm.
    pub fn default_rmab_horizon(key: &str) -> usize {
        if key == "deadline-large" {
            5000
        } else {
            1000
        }
    }

    /// Probe states for logging, as ids.
    pub fn probe_states(&self) -> Vec<StateId> {
        self.rmab.as_ref().map(|r| r.probe_states.iter().map(|&s| StateId(s)).collect()).unwrap_or_default()
    }
}
