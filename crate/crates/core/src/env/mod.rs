//! Finite controlled Markov chains.
//!
//! Every environment carries its exact [`TabularModel`]; sampling goes through the
//! same kernel, so empirical frequencies of [`Environment::step`] converge to the
//! model rows by construction.

mod access_control;
mod circulant;
mod deadline;
mod encoding;
mod forest;
mod model;
mod restart;

use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use access_control::AccessControlParams;
pub use circulant::CirculantParams;
pub use deadline::DeadlineParams;
pub use encoding::{EncodingMode, FeatureEncoding, FeatureTable};
pub use forest::ForestParams;
pub use model::TabularModel;
pub use restart::RestartParams;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

/// For two-action arms, `0` is passive and `1` is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub usize);

impl ActionId {
    pub const PASSIVE: ActionId = ActionId(0);
    pub const ACTIVE: ActionId = ActionId(1);
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
}

/// Registry keys of the shipped environments.
pub const ENV_KEYS: [&str; 6] = ["circulant", "restart", "deadline-small", "deadline-large", "access-control", "forest"];

#[derive(Debug, Clone)]
pub struct Environment {
    key: String,
    model: TabularModel,
    features: FeatureTable,
    labels: Vec<String>,
}

impl Environment {
    pub fn new(key: &str, model: TabularModel, features: FeatureTable, labels: Vec<String>) -> Result<Self> {
        if features.num_states() != model.num_states() {
            return Err(Error::DimensionMismatch {
                what: "feature table",
                expected: model.num_states(),
                got: features.num_states(),
            });
        }
        Ok(Self { key: key.to_string(), model, features, labels })
    }

    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.model.num_actions()
    }

    pub fn tabular_model(&self) -> &TabularModel {
        &self.model
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn encoding(&self) -> FeatureEncoding {
        self.features.encoding()
    }

    pub fn label(&self, state: StateId) -> &str {
        &self.labels[state.0]
    }

    /// Replaces the network encoding. Structured encodings are only available
    /// for environments that define state tuples, so only one-hot and scalar
    /// are accepted here.
    pub fn with_encoding(mut self, mode: EncodingMode) -> Result<Self> {
        let n = self.num_states();
        self.features = match mode {
            EncodingMode::OneHot => FeatureTable::one_hot(n),
            EncodingMode::NormalizedScalar => FeatureTable::normalized_scalar(n),
            EncodingMode::TupleNormalized if self.features.encoding().mode == EncodingMode::TupleNormalized => {
                self.features
            }
            EncodingMode::TupleNormalized => {
                return Err(Error::InvalidConfig(format!("{} has no tuple-structured states", self.key)))
            }
        };
        Ok(self)
    }

    fn check(&self, state: StateId, action: ActionId) -> Result<()> {
        if state.0 >= self.num_states() {
            return Err(Error::InvalidArgument(format!("state {} out of range for {}", state.0, self.key)));
        }
        if action.0 >= self.num_actions() {
            return Err(Error::InvalidArgument(format!("action {} out of range for {}", action.0, self.key)));
        }
        Ok(())
    }

    /// Samples one transition from `p(. | state, action)`.
    pub fn step(&self, state: StateId, action: ActionId, rng: &mut Rng) -> Result<(StateId, f64)> {
        self.check(state, action)?;
        let next = self.model.sample_next(state.0, action.0, rng);
        Ok((StateId(next), self.model.reward(state.0, action.0)))
    }

    pub fn encode(&self, state: StateId) -> Result<&[f64]> {
        if state.0 >= self.num_states() {
            return Err(Error::InvalidArgument(format!("state {} out of range for {}", state.0, self.key)));
        }
        Ok(self.features.row(state.0))
    }

    pub fn reward(&self, state: StateId, action: ActionId) -> f64 {
        self.model.reward(state.0, action.0)
    }
}

fn parse_params<P: DeserializeOwned + Default>(key: &str, params: Option<&toml::Table>) -> Result<P> {
    match params {
        None => Ok(P::default()),
        Some(t) => toml::Value::Table(t.clone())
            .try_into()
            .map_err(|e| Error::InvalidConfig(format!("parameters for {key}: {e}"))),
    }
}

/// Builds a shipped environment by registry key, applying optional parameter overrides.
pub fn make(key: &str, params: Option<&toml::Table>) -> Result<Environment> {
    match key {
        "circulant" => circulant::build(&parse_params::<CirculantParams>(key, params)?),
        "restart" => restart::build(&parse_params::<RestartParams>(key, params)?),
        "deadline-small" | "deadline-large" => {
            let base = if key == "deadline-small" { DeadlineParams::small() } else { DeadlineParams::large() };
            let p = match params {
                None => base,
                Some(t) => {
                    let mut merged = toml::Table::new();
                    merged.insert("d_max".into(), (base.d_max as i64).into());
                    merged.insert("b_max".into(), (base.b_max as i64).into());
                    merged.extend(t.clone());
                    parse_params::<DeadlineParams>(key, Some(&merged))?
                }
            };
            deadline::build(key, &p)
        }
        "access-control" => access_control::build(&parse_params::<AccessControlParams>(key, params)?),
        "forest" => forest::build(&parse_params::<ForestParams>(key, params)?),
        other => Err(Error::UnknownEnv(other.to_string())),
    }
}
