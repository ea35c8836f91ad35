//! Experience replay with a `(state, action)` index.
//!
//! Besides uniform mini-batch sampling, the buffer answers "average TD error over
//! every stored transition that left from this state under this action", which is
//! how the full-gradient learners estimate the conditional expectation of the
//! Bellman error from a single trajectory.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::env::{ActionId, StateId, Transition};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const DEFAULT_CAPACITY: usize = 100_000;
pub const DEFAULT_PER_KEY_CAP: usize = 256;

type Key = (StateId, ActionId);

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    per_key_cap: usize,
    ring: Vec<Transition>,
    /// Number of transitions ever pushed; entry `seq` lives at `seq % capacity`.
    pushed: u64,
    /// Most recent live sequence numbers per key, oldest first, at most `per_key_cap`.
    index: BTreeMap<Key, VecDeque<u64>>,
    live_pairs: BTreeMap<Key, usize>,
    live_states: BTreeMap<StateId, usize>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, per_key_cap: usize) -> Result<Self> {
        if capacity == 0 || per_key_cap == 0 {
            return Err(Error::InvalidArgument("replay capacity and per-key cap must be positive".into()));
        }
        Ok(Self {
            capacity,
            per_key_cap,
            ring: Vec::with_capacity(capacity.min(1 << 20)),
            pushed: 0,
            index: BTreeMap::new(),
            live_pairs: BTreeMap::new(),
            live_states: BTreeMap::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn per_key_cap(&self) -> usize {
        self.per_key_cap
    }

    pub fn len(&self) -> usize {
        self.ring.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        let seq = self.pushed;
        let pos = (seq % self.capacity as u64) as usize;
        if self.ring.len() == self.capacity {
            let old = self.ring[pos];
            let key = (old.state, old.action);
            let evicted = seq - self.capacity as u64;
            if let Some(list) = self.index.get_mut(&key) {
                if list.front() == Some(&evicted) {
                    list.pop_front();
                }
                if list.is_empty() {
                    self.index.remove(&key);
                }
            }
            decrement(&mut self.live_pairs, key);
            decrement(&mut self.live_states, old.state);
            self.ring[pos] = t;
        } else {
            self.ring.push(t);
        }
        let list = self.index.entry((t.state, t.action)).or_default();
        list.push_back(seq);
        if list.len() > self.per_key_cap {
            list.pop_front();
        }
        *self.live_pairs.entry((t.state, t.action)).or_default() += 1;
        *self.live_states.entry(t.state).or_default() += 1;
        self.pushed += 1;
    }

    fn at(&self, seq: u64) -> &Transition {
        &self.ring[(seq % self.capacity as u64) as usize]
    }

    /// Live transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        let start = self.pushed - self.ring.len() as u64;
        (start..self.pushed).map(move |seq| self.at(seq))
    }

    /// Ring positions indexed under `(state, action)`, oldest first.
    pub fn positions(&self, state: StateId, action: ActionId) -> Vec<usize> {
        self.index
            .get(&(state, action))
            .map(|l| l.iter().map(|&s| (s % self.capacity as u64) as usize).collect())
            .unwrap_or_default()
    }

    /// Indexed transitions for `(state, action)`, oldest first.
    pub fn matches(&self, state: StateId, action: ActionId) -> Result<impl Iterator<Item = &Transition> + '_> {
        let list = self
            .index
            .get(&(state, action))
            .ok_or(Error::MissingKey { state: state.0, action: action.0 })?;
        Ok(list.iter().map(move |&seq| self.at(seq)))
    }

    /// `B` draws, uniform with replacement over live entries.
    pub fn sample_uniform(&self, batch: usize, rng: &mut Rng) -> Result<Vec<Transition>> {
        if self.ring.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..batch).map(|_| self.ring[rng.random_range(0..self.ring.len())]).collect())
    }

    /// Mean over the indexed transitions `(state, action, r_m, x'_m)` of
    /// `r_m + bootstrap(x'_m) - offset - q_of_xu`.
    pub fn conditional_td_average(
        &self,
        state: StateId,
        action: ActionId,
        q_of_xu: f64,
        offset: f64,
        mut bootstrap: impl FnMut(StateId) -> f64,
    ) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for t in self.matches(state, action)? {
            total += t.reward + bootstrap(t.next_state) - offset - q_of_xu;
            count += 1;
        }
        Ok(total / count as f64)
    }

    /// The `(state, action)` with the most live transitions; ties go to the smallest pair.
    pub fn most_frequent_state_action(&self) -> Result<(StateId, ActionId)> {
        let mut best: Option<(Key, usize)> = None;
        for (&key, &count) in &self.live_pairs {
            if best.is_none_or(|(_, c)| count > c) {
                best = Some((key, count));
            }
        }
        best.map(|(k, _)| k).ok_or(Error::EmptyBuffer)
    }

    pub fn live_count(&self, state: StateId, action: ActionId) -> usize {
        self.live_pairs.get(&(state, action)).copied().unwrap_or(0)
    }

    /// Distinct departure states currently stored, ascending.
    pub fn distinct_states(&self) -> Vec<StateId> {
        self.live_states.keys().copied().collect()
    }

    /// `count` states drawn uniformly from the distinct stored departure states.
    pub fn sample_states(&self, count: usize, rng: &mut Rng) -> Result<Vec<StateId>> {
        let states = self.distinct_states();
        if states.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        Ok((0..count).map(|_| states[rng.random_range(0..states.len())]).collect())
    }

    /// Writes live transitions oldest first, one `x u r x'` record per line.
    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::new();
        for t in self.iter() {
            writeln!(out, "{} {} {} {}", t.state.0, t.action.0, t.reward, t.next_state.0).expect("write to string");
        }
        std::fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
    }

    /// Reads a dump produced by [`ReplayBuffer::dump`], pushing records in file order.
    pub fn load(path: impl AsRef<Path>, capacity: usize, per_key_cap: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let mut buf = Self::new(capacity, per_key_cap)?;
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = || Error::Parse(format!("{}:{}: expected `x u r x'`", path.as_ref().display(), lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(bad());
            }
            let state = fields[0].parse().map_err(|_| bad())?;
            let action = fields[1].parse().map_err(|_| bad())?;
            let reward: f64 = fields[2].parse().map_err(|_| bad())?;
            let next = fields[3].parse().map_err(|_| bad())?;
            if !reward.is_finite() {
                return Err(bad());
            }
            buf.push(Transition { state: StateId(state), action: ActionId(action), reward, next_state: StateId(next) });
        }
        Ok(buf)
    }
}

fn decrement<K: Ord>(map: &mut BTreeMap<K, usize>, key: K) {
    if let Some(c) = map.get_mut(&key) {
        *c -= 1;
        if *c == 0 {
            map.remove(&key);
        }
    }
}
