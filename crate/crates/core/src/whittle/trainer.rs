use rand::seq::index::sample;
use rand::Rng as _;

use super::{index_policy, top_m, WhittleLearner, WhittleNetwork};
use crate::env::{ActionId, Environment, StateId, Transition};
use crate::error::{Error, Result};
use crate::learners::{EpsilonSchedule, OffsetSpec, QNetwork, StepSchedule};
use crate::nn::MlpSpec;
use crate::replay::ReplayBuffer;
use crate::rng::{stream, Rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmabVariant {
    FullGradient,
    SemiGradient,
}

#[derive(Debug, Clone)]
pub struct RmabSettings {
    pub arms: usize,
    pub budget: usize,
    pub batch: usize,
    pub epsilon: EpsilonSchedule,
    /// Transitions collected under random budget-respecting activations before learning.
    pub warmup: usize,
    pub variant: RmabVariant,
    pub target_sync_period: u64,
    pub offset: OffsetSpec,
    pub replay_capacity: usize,
    pub per_key_cap: usize,
    pub q_hidden: Vec<usize>,
    pub whittle_hidden: Vec<usize>,
    pub q_schedule: StepSchedule,
    pub sigma_schedule: StepSchedule,
}

impl RmabSettings {
    pub fn validate(&self) -> Result<()> {
        if self.budget >= self.arms || self.budget == 0 {
            return Err(Error::InvalidConfig(format!("need 0 < M < N, got M = {}, N = {}", self.budget, self.arms)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        self.epsilon.validate()?;
        self.q_schedule.validate()?;
        self.sigma_schedule.validate()?;
        if let (Some(ka), Some(kb)) = (self.q_schedule.exponent(), self.sigma_schedule.exponent()) {
            if kb <= ka {
                return Err(Error::InvalidConfig(format!(
                    "index schedule must decay faster than the Q schedule (exponents {kb} <= {ka})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RmabStepReport {
    pub loss: f64,
    pub gap_loss: f64,
    /// Total reward collected by all arms at this step (unsubsidized).
    pub reward: f64,
    pub epsilon: f64,
    pub step_size: f64,
}

/// Runs the two-timescale learner on `N` identical arms sharing one Q-network
/// and one index network.
#[derive(Debug, Clone)]
pub struct RmabTrainer {
    arm: Environment,
    q: QNetwork,
    whittle: WhittleNetwork,
    learner: WhittleLearner,
    buffer: ReplayBuffer,
    states: Vec<StateId>,
    settings: RmabSettings,
    step: u64,
    warmed_up: bool,
    env_rng: Rng,
    explore_rng: Rng,
    replay_rng: Rng,
}

impl RmabTrainer {
    pub fn new(arm: Environment, settings: RmabSettings, seed: u64) -> Result<Self> {
        settings.validate()?;
        if arm.num_actions() != 2 {
            return Err(Error::InvalidConfig(format!("{} is not a two-action arm", arm.key())));
        }
        let features = arm.features().clone();
        let q_spec = MlpSpec::new(features.dimension() + 1, settings.q_hidden.clone(), 2)?;
        let q = QNetwork::new(q_spec, features.clone(), 1)?;
        let whittle = WhittleNetwork::new(features, settings.whittle_hidden.clone())?;
        let mut init = stream(seed, Stream::Init);
        let theta = q.spec().init(&mut init);
        let sigma = whittle.spec().init(&mut init);
        let mut env_rng = stream(seed, Stream::Env);
        let states = (0..settings.arms).map(|_| StateId(env_rng.random_range(0..arm.num_states()))).collect();
        let mut learner = WhittleLearner::new(
            theta,
            sigma,
            settings.offset.placeholder(),
            settings.q_schedule,
            settings.sigma_schedule,
        );
        if settings.variant == RmabVariant::SemiGradient {
            learner = learner.with_target_network(settings.target_sync_period);
        }
        Ok(Self {
            buffer: ReplayBuffer::new(settings.replay_capacity, settings.per_key_cap)?,
            arm,
            q,
            whittle,
            learner,
            states,
            settings,
            step: 0,
            warmed_up: false,
            env_rng,
            explore_rng: stream(seed, Stream::Explore),
            replay_rng: stream(seed, Stream::Replay),
        })
    }

    pub fn q_network(&self) -> &QNetwork {
        &self.q
    }

    pub fn whittle_network(&self) -> &WhittleNetwork {
        &self.whittle
    }

    pub fn learner(&self) -> &WhittleLearner {
        &self.learner
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn arm(&self) -> &Environment {
        &self.arm
    }

    pub fn settings(&self) -> &RmabSettings {
        &self.settings
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Current learned index of every arm state.
    pub fn indices(&self) -> Vec<f64> {
        self.whittle.table(&self.learner.sigma)
    }

    /// Advances all arms under `actions`, storing the transitions. Returns the total reward.
    fn advance(&mut self, actions: &[ActionId]) -> Result<f64> {
        let mut total = 0.0;
        for (state, &action) in self.states.iter_mut().zip(actions) {
            let (next, reward) = self.arm.step(*state, action, &mut self.env_rng)?;
            self.buffer.push(Transition { state: *state, action, reward, next_state: next });
            total += reward;
            *state = next;
        }
        Ok(total)
    }

    /// Fills the buffer under random budget-respecting activations and fixes the offset anchor.
    pub fn warmup(&mut self) -> Result<()> {
        if self.warmed_up {
            return Ok(());
        }
        while self.buffer.len() < self.settings.warmup.max(1) {
            let mut actions = vec![ActionId::PASSIVE; self.settings.arms];
            for i in sample(&mut self.explore_rng, self.settings.arms, self.settings.budget) {
                actions[i] = ActionId::ACTIVE;
            }
            self.advance(&actions)?;
        }
        self.learner.offset = self.settings.offset.resolve(&self.buffer)?;
        self.learner.offset.validate(&self.q)?;
        self.warmed_up = true;
        Ok(())
    }

    /// One acting step for all arms followed by one Q step and one index step.
    pub fn step(&mut self) -> Result<RmabStepReport> {
        self.warmup()?;
        let epsilon = self.settings.epsilon.at(self.step);
        let table = self.indices();
        let actions = index_policy(|s| table[s.0], &self.states, self.settings.budget, epsilon, &mut self.explore_rng)?;
        let reward = self.advance(&actions)?;
        let batch = self.settings.batch;
        let q_report = match self.settings.variant {
            RmabVariant::FullGradient => {
                self.learner.q_step(&self.q, &self.whittle, &self.buffer, batch, &mut self.replay_rng)?
            }
            RmabVariant::SemiGradient => {
                self.learner.dqn_step(&self.q, &self.whittle, &self.buffer, batch, &mut self.replay_rng)?
            }
        };
        let refs = self.buffer.sample_states(batch, &mut self.replay_rng)?;
        let sigma_report = self.learner.sigma_step(&self.q, &self.whittle, &refs)?;
        self.step += 1;
        Ok(RmabStepReport {
            loss: q_report.loss,
            gap_loss: sigma_report.loss,
            reward,
            epsilon,
            step_size: q_report.step_size,
        })
    }

    /// Runs `total_steps` learning steps.
    pub fn run(&mut self, total_steps: u64) -> Result<Vec<RmabStepReport>> {
        (0..total_steps).map(|_| self.step()).collect()
    }
}

/// Time-averaged total reward of the index policy that activates the `budget`
/// arms with the largest `indices[state]` (ties to the smaller arm index),
/// starting from uniformly drawn arm states.
pub fn evaluate_index_policy(
    arm: &Environment,
    indices: &[f64],
    arms: usize,
    budget: usize,
    horizon: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("evaluation horizon must be positive".into()));
    }
    if budget >= arms {
        return Err(Error::InvalidConfig(format!("budget M = {budget} must be smaller than N = {arms}")));
    }
    if indices.len() != arm.num_states() {
        return Err(Error::DimensionMismatch { what: "index table", expected: arm.num_states(), got: indices.len() });
    }
    let mut states: Vec<StateId> = (0..arms).map(|_| StateId(rng.random_range(0..arm.num_states()))).collect();
    let mut total = 0.0;
    for _ in 0..horizon {
        let values: Vec<f64> = states.iter().map(|s| indices[s.0]).collect();
        let active = top_m(&values, budget);
        let mut actions = vec![ActionId::PASSIVE; arms];
        for i in active {
            actions[i] = ActionId::ACTIVE;
        }
        for (s, a) in states.iter_mut().zip(&actions) {
            let (next, r) = arm.step(*s, *a, rng)?;
            total += r;
            *s = next;
        }
    }
    Ok(total / horizon as f64)
}
