//! Run configuration, seeded training loops, evaluation and on-disk formats.

mod config;
mod files;
mod run;

pub use config::{Algorithm, DiffQSection, EnvSection, EvalSection, NetworkSection, ReplaySection, RmabSection, RunConfig};
pub use files::{
    oracle_fixture_text, parse_oracle_fixture, parse_whittle_fixture, whittle_fixture_text, Checkpoint, CheckpointKind,
    MetricsRow, MetricsWriter, OracleFixture, CSV_HEADER,
};
pub use run::{
    evaluate_checkpoint, evaluate_greedy, evaluate_policy, manifest_text, resolved_config, rmab_settings, train, train_seed, SeedOutcome,
    TrainSummary, GIT_DESCRIBE,
};
