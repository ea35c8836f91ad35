#![allow(dead_code)]

//! Independent reference implementations used as test oracles.

use avgq::env::{ActionId, StateId, TabularModel, Transition};
use avgq::nn::{MlpSpec, ParamVector};

/// Closed-form one-hidden-layer ReLU network with the crate's flat layout:
/// `W1` (row per hidden unit), `b1`, `W2` (row per output), `b2`.
pub struct OneHidden<'a> {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub theta: &'a [f64],
}

impl<'a> OneHidden<'a> {
    pub fn new(spec: &MlpSpec, theta: &'a ParamVector) -> Self {
        assert_eq!(spec.hidden.len(), 1);
        Self { inputs: spec.input_dim, hidden: spec.hidden[0], outputs: spec.output_dim, theta: &theta.0 }
    }

    fn w1(&self, h: usize, i: usize) -> f64 {
        self.theta[h * self.inputs + i]
    }

    fn b1_at(&self) -> usize {
        self.inputs * self.hidden
    }

    fn w2_at(&self) -> usize {
        self.b1_at() + self.hidden
    }

    fn b2_at(&self) -> usize {
        self.w2_at() + self.hidden * self.outputs
    }

    fn pre(&self, x: &[f64], h: usize) -> f64 {
        self.theta[self.b1_at() + h] + (0..self.inputs).map(|i| self.w1(h, i) * x[i]).sum::<f64>()
    }

    pub fn q(&self, x: &[f64], u: usize) -> f64 {
        let mut out = self.theta[self.b2_at() + u];
        for h in 0..self.hidden {
            out += self.theta[self.w2_at() + u * self.hidden + h] * self.pre(x, h).max(0.0);
        }
        out
    }

    pub fn grad(&self, x: &[f64], u: usize) -> Vec<f64> {
        let mut g = vec![0.0; self.theta.len()];
        g[self.b2_at() + u] = 1.0;
        for h in 0..self.hidden {
            let z = self.pre(x, h);
            g[self.w2_at() + u * self.hidden + h] = z.max(0.0);
            if z > 0.0 {
                let w2 = self.theta[self.w2_at() + u * self.hidden + h];
                g[self.b1_at() + h] = w2;
                for i in 0..self.inputs {
                    g[h * self.inputs + i] = w2 * x[i];
                }
            }
        }
        g
    }

    /// `d Q(x, u) / d x_i`.
    pub fn input_grad(&self, x: &[f64], u: usize, i: usize) -> f64 {
        (0..self.hidden)
            .filter(|&h| self.pre(x, h) > 0.0)
            .map(|h| self.theta[self.w2_at() + u * self.hidden + h] * self.w1(h, i))
            .sum()
    }

    pub fn greedy(&self, x: &[f64]) -> usize {
        let mut best = 0;
        for u in 1..self.outputs {
            if self.q(x, u) > self.q(x, best) {
                best = u;
            }
        }
        best
    }
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Parameters making a one-hot network reproduce `table[s][u]` exactly:
/// identity first layer, the table in the output weights.
pub fn exact_table_params(table: &[Vec<f64>]) -> (MlpSpec, ParamVector) {
    let s = table.len();
    let a = table[0].len();
    let spec = MlpSpec::new(s, vec![s], a).unwrap();
    let mut theta = vec![0.0; spec.num_params()];
    for h in 0..s {
        theta[h * s + h] = 1.0;
    }
    let w2 = s * s + s;
    for u in 0..a {
        for h in 0..s {
            theta[w2 + u * s + h] = table[h][u];
        }
    }
    (spec, ParamVector(theta))
}

/// Deterministic cycle `0 -> 1 -> .. -> n-1 -> 0` under action 0; action 1 stays put.
pub fn deterministic_cycle(rewards: &[[f64; 2]]) -> TabularModel {
    let n = rewards.len();
    let mut rows = Vec::new();
    let mut r = Vec::new();
    for (s, rs) in rewards.iter().enumerate() {
        rows.push(vec![((s + 1) % n, 1.0)]);
        rows.push(vec![(s, 1.0)]);
        r.extend(rs);
    }
    TabularModel::from_rows(n, 2, rows, r).unwrap()
}

pub fn transition(s: usize, u: usize, r: f64, next: usize) -> Transition {
    Transition { state: StateId(s), action: ActionId(u), reward: r, next_state: StateId(next) }
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "index {i}: {x} vs {y} (tol {tol})");
    }
}

/// Pre-activations of every layer of a general MLP in the crate's layout.
pub fn preactivations(spec: &MlpSpec, theta: &ParamVector, x: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut act = x.to_vec();
    let mut off = 0;
    let layers = spec.layers();
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let z: Vec<f64> = (0..fan_out)
            .map(|o| {
                let b = theta.0[off + fan_in * fan_out + o];
                b + (0..fan_in).map(|i| theta.0[off + o * fan_in + i] * act[i]).sum::<f64>()
            })
            .collect();
        off += fan_in * fan_out + fan_out;
        act = if l + 1 == layers.len() { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
        out.push(z);
    }
    out
}

/// Smallest distance of any hidden pre-activation from the ReLU kink.
pub fn kink_margin(spec: &MlpSpec, theta: &ParamVector, x: &[f64]) -> f64 {
    let pre = preactivations(spec, theta, x);
    pre[..pre.len() - 1].iter().flatten().fold(f64::INFINITY, |m, z| m.min(z.abs()))
}

/// Conditional TD average recomputed from the full push history: keep the last
/// `capacity` pushes, filter by `(x, u)`, keep the last `per_key_cap` matches, average.
#[allow(clippy::too_many_arguments)]
pub fn full_scan_td_average(
    history: &[Transition],
    capacity: usize,
    per_key_cap: usize,
    x: StateId,
    u: ActionId,
    q_xu: f64,
    offset: f64,
    boot: &dyn Fn(StateId) -> f64,
) -> Option<f64> {
    let live = &history[history.len().saturating_sub(capacity)..];
    let matches: Vec<&Transition> = live.iter().filter(|t| t.state == x && t.action == u).collect();
    let kept = &matches[matches.len().saturating_sub(per_key_cap)..];
    if kept.is_empty() {
        return None;
    }
    Some(kept.iter().map(|t| t.reward + boot(t.next_state) - offset - q_xu).sum::<f64>() / kept.len() as f64)
}

/// Runs `count` random push/evict/query sequences and returns the largest
/// discrepancy between the buffer and the full-scan recomputation, or an error
/// message on a presence mismatch.
pub fn replay_equivalence_sweep(count: u64) -> Result<f64, String> {
    use avgq::replay::ReplayBuffer;
    use avgq::rng::{stream, Stream};
    use rand::Rng;

    let mut worst: f64 = 0.0;
    for case in 0..count {
        let mut rng = stream(case, Stream::Replay);
        let capacity = rng.random_range(1..40);
        let cap = rng.random_range(1..12);
        let states = rng.random_range(1..5);
        let actions = rng.random_range(1..3);
        let boot_table: Vec<f64> = (0..states).map(|_| rng.random_range(-3.0..3.0)).collect();
        let boot = |s: StateId| boot_table[s.0];
        let mut buf = ReplayBuffer::new(capacity, cap).unwrap();
        let mut history = Vec::new();
        for _ in 0..rng.random_range(0..120) {
            let t = Transition {
                state: StateId(rng.random_range(0..states)),
                action: ActionId(rng.random_range(0..actions)),
                reward: rng.random_range(-2.0..2.0),
                next_state: StateId(rng.random_range(0..states)),
            };
            buf.push(t);
            history.push(t);
            if rng.random_bool(0.3) {
                let (x, u) = (StateId(rng.random_range(0..states)), ActionId(rng.random_range(0..actions)));
                let (q, off) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                let got = buf.conditional_td_average(x, u, q, off, boot).ok();
                let want = full_scan_td_average(&history, capacity, cap, x, u, q, off, &boot);
                match (got, want) {
                    (Some(g), Some(w)) => worst = worst.max((g - w).abs()),
                    (None, None) => {}
                    other => return Err(format!("case {case}: presence mismatch {other:?}")),
                }
            }
        }
    }
    Ok(worst)
}
