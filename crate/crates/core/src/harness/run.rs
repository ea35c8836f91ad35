use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::Serialize;

use super::config::{Algorithm, RunConfig};
use super::files::{Checkpoint, CheckpointKind, MetricsRow, MetricsWriter};
use crate::env::{ActionId, Environment, StateId, Transition};
use crate::error::{Error, Result};
use crate::learners::{DiffQLearner, OffsetFn, QNetwork, RviLearner, StepReport};
use crate::nn::ParamVector;
use crate::replay::ReplayBuffer;
use crate::rng::{stream, Rng, Stream};
use crate::whittle::{evaluate_index_policy, RmabSettings, RmabTrainer, RmabVariant};

/// Build identification recorded in every manifest.
pub const GIT_DESCRIBE: &str = env!("AVGQ_GIT_DESCRIBE");

/// Time-averaged reward of `policy` over `horizon` steps from a uniformly drawn start state.
pub fn evaluate_policy(
    env: &Environment,
    mut policy: impl FnMut(StateId) -> ActionId,
    horizon: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("evaluation horizon must be positive".into()));
    }
    let mut state = StateId(rng.random_range(0..env.num_states()));
    let mut total = 0.0;
    for _ in 0..horizon {
        let (next, r) = env.step(state, policy(state), rng)?;
        total += r;
        state = next;
    }
    Ok(total / horizon as f64)
}

/// [`evaluate_policy`] for the greedy policy of `Q(.; theta)`.
pub fn evaluate_greedy(env: &Environment, q: &QNetwork, theta: &ParamVector, horizon: usize, rng: &mut Rng) -> Result<f64> {
    q.check_params(theta)?;
    let table: Vec<ActionId> = (0..env.num_states()).map(|s| q.greedy(theta, StateId(s), &[])).collect();
    evaluate_policy(env, |s| table[s.0], horizon, rng)
}

/// How one seed ended.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub diverged: bool,
    pub steps: u64,
    /// Last reported proxy: `f(Q)` for RVI and Whittle runs, `R̄` for Differential Q-learning.
    pub proxy: f64,
    pub eval_reward: Option<f64>,
    pub metrics: PathBuf,
    pub theta: ParamVector,
    /// Learned indices per arm state (Whittle runs).
    pub indices: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub out_dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
}

impl TrainSummary {
    pub fn all_diverged(&self) -> bool {
        !self.seeds.is_empty() && self.seeds.iter().all(|s| s.diverged)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    git_describe: &'a str,
    acting_steps_per_gradient_step: u32,
    config: RunConfig,
}

/// The configuration with every default made explicit.
pub fn resolved_config(cfg: &RunConfig) -> Result<RunConfig> {
    let env = cfg.environment()?;
    let mut out = cfg.clone();
    out.network.hidden = Some(cfg.hidden(&env));
    out.epsilon = Some(cfg.epsilon());
    if cfg.algorithm.is_whittle() {
        out.network.index_hidden = Some(cfg.index_hidden(&env));
        out.index_schedule = Some(cfg.index_schedule());
    }
    Ok(out)
}

pub fn manifest_text(cfg: &RunConfig) -> Result<String> {
    let m = Manifest { git_describe: GIT_DESCRIBE, acting_steps_per_gradient_step: 1, config: resolved_config(cfg)? };
    Ok(toml::to_string(&m).expect("manifest serializes"))
}

fn seed_file(dir: &Path, seed: u64, suffix: &str) -> PathBuf {
    dir.join(format!("seed-{seed}.{suffix}"))
}

/// Runs every seed in parallel and writes metrics, checkpoints and a manifest
/// under `cfg.out_dir`. A diverging seed is recorded and does not stop the others.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let manifest = cfg.out_dir.join("manifest.toml");
    std::fs::write(&manifest, manifest_text(cfg)?).map_err(|e| Error::io(&manifest, e))?;
    let results: Vec<Result<SeedOutcome>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg.seeds.iter().map(|&seed| scope.spawn(move || train_seed(cfg, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(TrainSummary { out_dir: cfg.out_dir.clone(), seeds })
}

/// Runs one seed, writing its files under `cfg.out_dir`.
pub fn train_seed(cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    if cfg.algorithm.is_whittle() {
        train_rmab_seed(cfg, seed)
    } else {
        train_single_seed(cfg, seed)
    }
}

enum Agent {
    Rvi(RviLearner),
    DiffQ(DiffQLearner),
}

impl Agent {
    fn theta(&self) -> &ParamVector {
        match self {
            Agent::Rvi(l) => &l.theta,
            Agent::DiffQ(l) => &l.theta,
        }
    }

    fn proxy(&self, q: &QNetwork) -> f64 {
        match self {
            Agent::Rvi(l) => l.proxy(q),
            Agent::DiffQ(l) => l.r_bar,
        }
    }
}

/// Loss level treated as divergence before it reaches non-finite values.
const DIVERGENCE_LOSS: f64 = 1e12;

fn guard(loss: f64) -> Result<()> {
    if loss.is_finite() && loss < DIVERGENCE_LOSS {
        Ok(())
    } else {
        Err(Error::NumericOverflow(format!("training loss reached {loss}")))
    }
}

fn save_checkpoint(path: &Path, kind: CheckpointKind, env: &Environment, spec: &crate::nn::MlpSpec, params: &ParamVector) -> Result<()> {
    Checkpoint { kind, env: env.key().to_string(), encoding: env.encoding().mode, spec: spec.clone(), params: params.clone() }.save(path)
}

fn train_single_seed(cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    let env = cfg.environment()?;
    let q = QNetwork::for_env(&env, cfg.hidden(&env))?;
    let mut env_rng = stream(seed, Stream::Env);
    let mut explore = stream(seed, Stream::Explore);
    let mut replay_rng = stream(seed, Stream::Replay);
    let theta = q.spec().init(&mut stream(seed, Stream::Init));
    let mut buffer = ReplayBuffer::new(cfg.replay.capacity, cfg.replay.per_key_cap)?;

    let mut state = StateId(env_rng.random_range(0..env.num_states()));
    let mut act = |buffer: &mut ReplayBuffer, action: ActionId, state: &mut StateId| -> Result<()> {
        let (next, reward) = env.step(*state, action, &mut env_rng)?;
        buffer.push(Transition { state: *state, action, reward, next_state: next });
        *state = next;
        Ok(())
    };
    for _ in 0..cfg.replay.warmup.max(1) {
        let u = ActionId(explore.random_range(0..env.num_actions()));
        act(&mut buffer, u, &mut state)?;
    }
    let offset: OffsetFn = cfg.offset.resolve(&buffer)?;
    let mut agent = match cfg.algorithm {
        Algorithm::RviFgdqn => Agent::Rvi(RviLearner::full_gradient(theta, offset, cfg.schedule)),
        Algorithm::RviDqn => Agent::Rvi(RviLearner::semi_gradient(theta, offset, cfg.schedule, cfg.target_sync_period)),
        Algorithm::DiffqFgdqn | Algorithm::DiffqDqn => {
            let d = cfg.diffq;
            let l = DiffQLearner::new(theta, d.r_bar_init, d.eta, cfg.schedule, d.mode);
            Agent::DiffQ(if cfg.algorithm == Algorithm::DiffqDqn { l.with_target_network(cfg.target_sync_period) } else { l })
        }
        Algorithm::WhittleFgdqn | Algorithm::WhittleDqn => unreachable!("handled by the RMAB trainer"),
    };
    if let Agent::Rvi(l) = &agent {
        l.offset.validate(&q)?;
    }

    let metrics = seed_file(&cfg.out_dir, seed, "csv");
    let mut writer = MetricsWriter::create(&metrics, &[])?;
    let epsilon = cfg.epsilon();
    let mut outcome = SeedOutcome {
        seed,
        diverged: false,
        steps: 0,
        proxy: agent.proxy(&q),
        eval_reward: None,
        metrics: metrics.clone(),
        theta: agent.theta().clone(),
        indices: None,
    };
    let mut last = StepReport { loss: 0.0, proxy: outcome.proxy, step_size: 0.0 };
    for n in 0..cfg.total_steps {
        let eps = epsilon.at(n);
        let action = if explore.random::<f64>() < eps {
            ActionId(explore.random_range(0..env.num_actions()))
        } else {
            q.greedy(agent.theta(), state, &[])
        };
        act(&mut buffer, action, &mut state)?;
        let report = match &mut agent {
            Agent::Rvi(l) if l.target.is_some() => l.dqn_step(&q, &buffer, cfg.batch, &mut replay_rng),
            Agent::Rvi(l) => l.fgdqn_step(&q, &buffer, cfg.batch, &mut replay_rng),
            Agent::DiffQ(l) if cfg.algorithm == Algorithm::DiffqDqn => {
                l.dqn_step(&q, &buffer, Some(env.tabular_model()), cfg.batch, &mut replay_rng)
            }
            Agent::DiffQ(l) => l.fgdqn_step(&q, &buffer, Some(env.tabular_model()), cfg.batch, &mut replay_rng),
        }
        .and_then(|r| guard(r.loss).map(|()| r));
        let step = n + 1;
        match report {
            Ok(r) => last = r,
            Err(e) if e.is_divergence() => {
                outcome.diverged = true;
                outcome.steps = step;
                writer.write(&MetricsRow {
                    seed,
                    step,
                    loss: f64::NAN,
                    proxy: last.proxy,
                    eval_reward: None,
                    diverged: true,
                    extra: vec![],
                })?;
                writer.flush()?;
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        }
        let eval_due = cfg.eval.period > 0 && step % cfg.eval.period == 0;
        let eval_reward = if eval_due {
            let r = evaluate_greedy(&env, &q, agent.theta(), cfg.eval.horizon, &mut stream(seed, Stream::Eval))?;
            outcome.eval_reward = Some(r);
            Some(r)
        } else {
            None
        };
        if eval_due || step % cfg.log_period == 0 {
            writer.write(&MetricsRow { seed, step, loss: last.loss, proxy: last.proxy, eval_reward, diverged: false, extra: vec![] })?;
        }
        if eval_due {
            writer.flush()?;
        }
    }
    writer.flush()?;
    outcome.steps = cfg.total_steps;
    outcome.proxy = agent.proxy(&q);
    outcome.theta = agent.theta().clone();
    save_checkpoint(&seed_file(&cfg.out_dir, seed, "theta.ckpt"), CheckpointKind::Q, &env, q.spec(), agent.theta())?;
    Ok(outcome)
}

/// Settings for the RMAB trainer derived from a run configuration.
pub fn rmab_settings(cfg: &RunConfig) -> Result<RmabSettings> {
    let env = cfg.environment()?;
    let rmab = cfg.rmab_section()?;
    Ok(RmabSettings {
        arms: rmab.arms,
        budget: rmab.budget,
        batch: cfg.batch,
        epsilon: cfg.epsilon(),
        warmup: cfg.replay.warmup,
        variant: if cfg.algorithm == Algorithm::WhittleDqn { RmabVariant::SemiGradient } else { RmabVariant::FullGradient },
        target_sync_period: cfg.target_sync_period,
        offset: cfg.offset,
        replay_capacity: cfg.replay.capacity,
        per_key_cap: cfg.replay.per_key_cap,
        q_hidden: cfg.hidden(&env),
        whittle_hidden: cfg.index_hidden(&env),
        q_schedule: cfg.schedule,
        sigma_schedule: cfg.index_schedule(),
    })
}

fn train_rmab_seed(cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    let env = cfg.environment()?;
    let rmab = cfg.rmab_section()?;
    let mut trainer = RmabTrainer::new(env.clone(), rmab_settings(cfg)?, seed)?;
    trainer.warmup()?;
    let probes = cfg.probe_states();
    let mut columns = vec!["eval_index_policy_reward".to_string(), "mean_gap_loss".to_string()];
    columns.extend(probes.iter().map(|s| format!("lambda_{}", s.0)));
    let metrics = seed_file(&cfg.out_dir, seed, "csv");
    let mut writer = MetricsWriter::create(&metrics, &columns)?;
    let proxy = |t: &RmabTrainer| {
        let l = t.learner();
        let lambda = l.offset.anchor().map_or(0.0, |s| t.whittle_network().index(&l.sigma, s));
        l.offset.value(t.q_network(), &l.theta, &[lambda])
    };
    let mut outcome = SeedOutcome {
        seed,
        diverged: false,
        steps: 0,
        proxy: proxy(&trainer),
        eval_reward: None,
        metrics: metrics.clone(),
        theta: trainer.learner().theta.clone(),
        indices: Some(trainer.indices()),
    };
    let mut gap = 0.0;
    for n in 0..cfg.total_steps {
        let step = n + 1;
        let loss = match trainer.step().and_then(|r| guard(r.loss).map(|()| r)) {
            Ok(r) => {
                gap = r.gap_loss;
                r.loss
            }
            Err(e) if e.is_divergence() => {
                outcome.diverged = true;
                outcome.steps = step;
                let mut extra = vec![None, Some(gap)];
                extra.extend(probes.iter().map(|_| None));
                writer.write(&MetricsRow { seed, step, loss: f64::NAN, proxy: outcome.proxy, eval_reward: None, diverged: true, extra })?;
                writer.flush()?;
                return Ok(outcome);
            }
            Err(e) => return Err(e),
        };
        let eval_due = cfg.eval.period > 0 && step % cfg.eval.period == 0;
        if !(eval_due || step % cfg.log_period == 0) {
            continue;
        }
        let table = trainer.indices();
        let total = if eval_due {
            let r = evaluate_index_policy(&env, &table, rmab.arms, rmab.budget, cfg.eval.horizon, &mut stream(seed, Stream::Eval))?;
            outcome.eval_reward = Some(r / rmab.arms as f64);
            Some(r)
        } else {
            None
        };
        outcome.proxy = proxy(&trainer);
        let mut extra = vec![total, Some(gap)];
        extra.extend(probes.iter().map(|s| Some(table[s.0])));
        writer.write(&MetricsRow {
            seed,
            step,
            loss,
            proxy: outcome.proxy,
            eval_reward: total.map(|r| r / rmab.arms as f64),
            diverged: false,
            extra,
        })?;
        if eval_due {
            writer.flush()?;
        }
    }
    writer.flush()?;
    outcome.steps = cfg.total_steps;
    outcome.proxy = proxy(&trainer);
    outcome.theta = trainer.learner().theta.clone();
    outcome.indices = Some(trainer.indices());
    save_checkpoint(
        &seed_file(&cfg.out_dir, seed, "theta.ckpt"),
        CheckpointKind::SubsidizedQ,
        &env,
        trainer.q_network().spec(),
        &trainer.learner().theta,
    )?;
    save_checkpoint(
        &seed_file(&cfg.out_dir, seed, "sigma.ckpt"),
        CheckpointKind::Index,
        &env,
        trainer.whittle_network().spec(),
        &trainer.learner().sigma,
    )?;
    Ok(outcome)
}

/// Evaluates a checkpoint on `env`: the greedy policy for a Q checkpoint, the
/// top-`budget` index policy over `arms` copies for an index checkpoint.
/// Index evaluations return the total reward per step over all arms.
pub fn evaluate_checkpoint(
    ck: &Checkpoint,
    env: &Environment,
    horizon: usize,
    arms: usize,
    budget: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let env = env.clone().with_encoding(ck.encoding)?;
    match ck.kind {
        CheckpointKind::Q => {
            if ck.spec.output_dim != env.num_actions() {
                return Err(Error::DimensionMismatch { what: "Q-network outputs", expected: env.num_actions(), got: ck.spec.output_dim });
            }
            let q = QNetwork::new(ck.spec.clone(), env.features().clone(), 0)?;
            evaluate_greedy(&env, &q, &ck.params, horizon, rng)
        }
        CheckpointKind::Index => {
            let net = crate::whittle::WhittleNetwork::new(env.features().clone(), ck.spec.hidden.clone())?;
            if net.spec() != &ck.spec {
                return Err(Error::DimensionMismatch { what: "index network input", expected: net.spec().input_dim, got: ck.spec.input_dim });
            }
            evaluate_index_policy(&env, &net.table(&ck.params), arms, budget, horizon, rng)
        }
        CheckpointKind::SubsidizedQ => {
            Err(Error::UnsupportedMode("subsidized Q checkpoints have no standalone policy; evaluate the index checkpoint".into()))
        }
    }
}
