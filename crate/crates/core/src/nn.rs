//! Fully-connected rectifier networks with exact reverse-mode gradients.
//!
//! Parameters are one flat vector, layer-major; within a layer the weight
//! matrix (row-major, `[out][in]`) comes before the bias vector. Hidden layers
//! use `max(0, z)`; the output layer is affine.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::ActionId;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("network dimensions must be positive".into()));
        }
        if hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::InvalidArgument(format!("hidden layers must be non-empty and positive, got {hidden:?}")));
        }
        Ok(Self { input_dim, hidden, output_dim })
    }

    /// One layer of 64 units for small state spaces, two of 128 otherwise.
    pub fn default_hidden(num_states: usize) -> Vec<usize> {
        if num_states <= 200 {
            vec![64]
        } else {
            vec![128, 128]
        }
    }

    /// `(fan_in, fan_out)` of each affine layer.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input_dim);
        dims.extend(&self.hidden);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(&self, rng: &mut Rng) -> ParamVector {
        let mut values = Vec::with_capacity(self.num_params());
        for (fan_in, fan_out) in self.layers() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            values.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..=bound)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        ParamVector(values)
    }

    /// Offset of the output-layer bias for `action` in the flat parameter vector.
    pub fn output_bias_index(&self, action: usize) -> usize {
        self.num_params() - self.output_dim + action
    }

    fn check(&self, theta: &ParamVector, x: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::DimensionMismatch { what: "parameter vector", expected: self.num_params(), got: theta.len() });
        }
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { what: "network input", expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }
}

/// Flat network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

/// Same layout as [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl GradVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Post-activation values of every layer, input first.
pub(crate) struct Trace {
    acts: Vec<Vec<f64>>,
}

impl Trace {
    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

pub(crate) fn forward_trace(spec: &MlpSpec, theta: &[f64], x: &[f64]) -> Trace {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x.to_vec());
    let mut off = 0;
    for (l, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let w = &theta[off..off + fan_in * fan_out];
        let b = &theta[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        off += fan_in * fan_out + fan_out;
        let input = &acts[l];
        let mut out = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &w[o * fan_in..(o + 1) * fan_in];
            let z = row.iter().zip(input).fold(b[o], |acc, (wi, xi)| acc + wi * xi);
            out.push(if l == last { z } else { z.max(0.0) });
        }
        acts.push(out);
    }
    Trace { acts }
}

/// Back-propagates `scale * seed` (a cotangent on the output) through `trace`,
/// accumulating into `grad` (parameters) and/or `input_grad`.
pub(crate) fn backprop(
    spec: &MlpSpec,
    theta: &[f64],
    trace: &Trace,
    seed: &[f64],
    scale: f64,
    mut grad: Option<&mut [f64]>,
    input_grad: Option<&mut [f64]>,
) {
    let layers = spec.layers();
    let mut offsets = Vec::with_capacity(layers.len());
    let mut off = 0;
    for &(i, o) in &layers {
        offsets.push(off);
        off += i * o + o;
    }
    let mut delta: Vec<f64> = seed.iter().map(|s| s * scale).collect();
    for l in (0..layers.len()).rev() {
        let (fan_in, fan_out) = layers[l];
        let off = offsets[l];
        let input = &trace.acts[l];
        if let Some(g) = grad.as_deref_mut() {
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut g[off + o * fan_in..off + (o + 1) * fan_in];
                for (gi, xi) in row.iter_mut().zip(input) {
                    *gi += d * xi;
                }
                g[off + fan_in * fan_out + o] += d;
            }
        }
        if l == 0 && input_grad.is_none() {
            break;
        }
        let w = &theta[off..off + fan_in * fan_out];
        let mut prev = vec![0.0; fan_in];
        for o in 0..fan_out {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            for (p, wi) in prev.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
                *p += wi * d;
            }
        }
        if l > 0 {
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
        }
        delta = prev;
    }
    if let Some(ig) = input_grad {
        for (g, d) in ig.iter_mut().zip(&delta) {
            *g += d;
        }
    }
}

/// Action values `Q(x, .; theta)`.
pub fn forward(spec: &MlpSpec, theta: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    spec.check(theta, x)?;
    Ok(forward_trace(spec, &theta.0, x).acts.pop().expect("output layer"))
}

fn one_hot(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Exact gradient of `forward(spec, theta, x)[action]` with respect to `theta`.
pub fn grad_param(spec: &MlpSpec, theta: &ParamVector, x: &[f64], action: ActionId) -> Result<GradVector> {
    spec.check(theta, x)?;
    if action.0 >= spec.output_dim {
        return Err(Error::InvalidArgument(format!("action {} out of range", action.0)));
    }
    let trace = forward_trace(spec, &theta.0, x);
    let mut g = vec![0.0; theta.len()];
    backprop(spec, &theta.0, &trace, &one_hot(spec.output_dim, action.0), 1.0, Some(&mut g), None);
    Ok(GradVector(g))
}

/// Gradient of `forward(spec, theta, x)[action]` with respect to the input `x`.
pub fn grad_input(spec: &MlpSpec, theta: &ParamVector, x: &[f64], action: ActionId) -> Result<Vec<f64>> {
    spec.check(theta, x)?;
    if action.0 >= spec.output_dim {
        return Err(Error::InvalidArgument(format!("action {} out of range", action.0)));
    }
    let trace = forward_trace(spec, &theta.0, x);
    let mut g = vec![0.0; spec.input_dim];
    backprop(spec, &theta.0, &trace, &one_hot(spec.output_dim, action.0), 1.0, None, Some(&mut g));
    Ok(g)
}

/// Smallest index attaining the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Danskin subgradient of `max_v Q(x, v; theta)`: the maximizing action (smallest
/// index on ties) and the parameter gradient at that action.
pub fn grad_max(spec: &MlpSpec, theta: &ParamVector, x: &[f64]) -> Result<(ActionId, GradVector)> {
    spec.check(theta, x)?;
    let trace = forward_trace(spec, &theta.0, x);
    let v = argmax(trace.output());
    let mut g = vec![0.0; theta.len()];
    backprop(spec, &theta.0, &trace, &one_hot(spec.output_dim, v), 1.0, Some(&mut g), None);
    Ok((ActionId(v), GradVector(g)))
}

/// `theta + scale * g`, rejecting non-finite results.
pub fn axpy_update(theta: &ParamVector, scale: f64, g: &GradVector) -> Result<ParamVector> {
    let mut out = theta.clone();
    axpy_in_place(&mut out, scale, &g.0)?;
    Ok(out)
}

pub(crate) fn axpy_in_place(theta: &mut ParamVector, scale: f64, g: &[f64]) -> Result<()> {
    if theta.len() != g.len() {
        return Err(Error::DimensionMismatch { what: "gradient", expected: theta.len(), got: g.len() });
    }
    if scale == 0.0 {
        return Ok(());
    }
    for (t, gi) in theta.0.iter_mut().zip(g) {
        *t += scale * gi;
    }
    if let Some(pos) = theta.0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NumericOverflow(format!("parameter {pos} became {}", theta.0[pos])));
    }
    Ok(())
}
