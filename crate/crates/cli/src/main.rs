use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use avgq::harness::{self, Checkpoint, RunConfig};
use avgq::oracle::{self, DEFAULT_MAX_ITER, DEFAULT_TOL};
use avgq::rng::{stream, Stream};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "avgq", version, about = "Average-reward Q-learning with neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a run configuration.
    Train {
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, overriding `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on an environment.
    Eval {
        checkpoint: PathBuf,
        env: String,
        #[arg(long, default_value_t = 1000)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of arms for index checkpoints.
        #[arg(long)]
        arms: Option<usize>,
        /// Arms activated per step for index checkpoints.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Solve an environment exactly and print the result.
    Oracle {
        env: String,
        /// Print exact Whittle indices instead of the optimal Q table.
        #[arg(long)]
        whittle: bool,
        /// Write to this file instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write oracle fixture files for an environment.
    Fixtures {
        env: String,
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use avgq::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::InvalidConfig(_) | E::UnknownEnv(_) | E::Parse(_) | E::Io { .. }) => 2,
        Some(E::NumericOverflow(_) | E::NoConvergence { .. } | E::SingularSystem(_) | E::NotBracketed { .. }) => 4,
        _ => 1,
    }
}

fn train(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<u8> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    let summary = harness::train(&cfg)?;
    for s in &summary.seeds {
        let eval = s.eval_reward.map_or_else(|| "-".to_string(), |r| format!("{r:.6}"));
        let status = if s.diverged { " diverged" } else { "" };
        println!("seed {} steps {} proxy {:.6} eval {eval}{status}", s.seed, s.steps, s.proxy);
    }
    if summary.all_diverged() {
        eprintln!("error: every seed diverged; metrics in {}", summary.out_dir.display());
        return Ok(3);
    }
    Ok(0)
}

fn eval(checkpoint: &Path, key: &str, horizon: usize, seed: u64, arms: Option<usize>, budget: Option<usize>) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let env = avgq::env::make(key, None)?;
    let deadline = key.starts_with("deadline");
    let arms = arms.unwrap_or(if deadline { 4 } else { 100 });
    let budget = budget.unwrap_or(if deadline { 1 } else { 20 });
    let value = harness::evaluate_checkpoint(&ck, &env, horizon, arms, budget, &mut stream(seed, Stream::Eval))?;
    println!("{value:?}");
    Ok(())
}

fn oracle_text(key: &str, whittle: bool) -> Result<String> {
    let env = avgq::env::make(key, None)?;
    let model = env.tabular_model();
    if whittle {
        let indices = oracle::whittle_indices(model, DEFAULT_TOL)?;
        Ok(harness::whittle_fixture_text(key, &indices))
    } else {
        let sol = oracle::relative_value_iteration(model, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
        Ok(harness::oracle_fixture_text(key, &sol))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn fixtures(key: &str, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(format!("{key}.oracle.txt"));
    write(&path, &oracle_text(key, false)?)?;
    println!("{}", path.display());
    if avgq::env::make(key, None)?.num_actions() == 2 {
        let path = dir.join(format!("{key}.whittle.txt"));
        write(&path, &oracle_text(key, true)?)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Train { config, seed, out } => train(&config, seed, out),
        Command::Eval { checkpoint, env, horizon, seed, arms, budget } => {
            eval(&checkpoint, &env, horizon, seed, arms, budget).map(|()| 0)
        }
        Command::Oracle { env, whittle, out } => {
            let text = oracle_text(&env, whittle)?;
            match out {
                Some(path) => write(&path, &text)?,
                None => print!("{text}"),
            }
            Ok(0)
        }
        Command::Fixtures { env, out } => fixtures(&env, &out).map(|()| 0),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
