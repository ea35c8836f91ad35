//! Average-reward Q-learning with neural function approximation.
//!
//! The crate provides:
//!
//! - [`env`]: finite benchmark MDPs with exact tabular models,
//! - [`nn`]: small rectifier MLPs with exact reverse-mode gradients,
//! - [`replay`]: experience replay with `(state, action)`-conditional averaging,
//! - [`learners`]: RVI and Differential Q-learning, full-gradient and DQN variants,
//! - [`whittle`]: two-timescale Whittle index learning for restless bandits,
//! - [`oracle`]: relative value iteration, stationary gains and exact Whittle indices,
//! - [`harness`]: configuration, seeded training runs, evaluation and file formats.

pub mod env;
pub mod error;
pub mod harness;
pub mod learners;
pub mod nn;
pub mod oracle;
pub mod replay;
pub mod rng;
pub mod whittle;

pub use env::{ActionId, Environment, StateId, TabularModel, Transition};
pub use error::{Error, Result};
pub use nn::{GradVector, MlpSpec, ParamVector};
