//! Small convolutional policy/value network with a hand-written backward pass.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::encode::{StateTensor, CHANNELS, GRID_SIZE};
use crate::rng::ProjectRng;

const KERNEL: usize = 3;
const NORM_EPS: f64 = 1e-5;
const SHIFT_INIT: f64 = 0.01;
/// Samples per gradient chunk; fixed so the reduction order never depends on threads.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub in_channels: usize,
    pub grid: usize,
    pub conv_channels: Vec<usize>,
    pub hidden: usize,
    pub head_hidden: usize,
    pub actions: usize,
}

impl NetworkShape {
    pub fn standard(actions: usize) -> Self {
        Self {
            in_channels: CHANNELS,
            grid: GRID_SIZE,
            conv_channels: vec![16, 32, 32],
            hidden: 128,
            head_hidden: 64,
            actions,
        }
    }

    /// Spatial side length after each conv block (stride 2, padding 1).
    fn sides(&self) -> Vec<usize> {
        let mut s = self.grid;
        let mut out = vec![s];
        for _ in &self.conv_channels {
            s = (s - 1) / 2 + 1;
            out.push(s);
        }
        out
    }

    fn flat(&self) -> usize {
        let side = *self.sides().last().unwrap();
        self.conv_channels.last().copied().unwrap_or(self.in_channels) * side * side
    }

    fn tensors(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c_in = self.in_channels;
        for (i, &c) in self.conv_channels.iter().enumerate() {
            out.push((format!("conv{i}.weight"), vec![c, c_in, KERNEL, KERNEL]));
            out.push((format!("conv{i}.scale"), vec![c]));
            out.push((format!("conv{i}.shift"), vec![c]));
            c_in = c;
        }
        out.push(("trunk.weight".into(), vec![self.hidden, self.flat()]));
        out.push(("trunk.bias".into(), vec![self.hidden]));
        for head in ["policy", "value"] {
            let outputs = if head == "policy" { self.actions } else { 1 };
            out.push((format!("{head}.hidden.weight"), vec![self.head_hidden, self.hidden]));
            out.push((format!("{head}.hidden.bias"), vec![self.head_hidden]));
            out.push((format!("{head}.out.weight"), vec![outputs, self.head_hidden]));
            out.push((format!("{head}.out.bias"), vec![outputs]));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, d)| d.iter().product::<usize>()).sum()
    }
}

/// Named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    shape: NetworkShape,
    specs: Vec<TensorSpec>,
    params: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("expected {expected} parameters, got {actual}")]
    ParamCount { expected: usize, actual: usize },
    #[error("input is {actual} cells wide, network expects {expected}")]
    InputSize { expected: usize, actual: usize },
    #[error("policy target has {actual} entries, network has {expected} actions")]
    TargetSize { expected: usize, actual: usize },
    #[error("non-finite gradient")]
    NonFinite,
    #[error("empty batch")]
    EmptyBatch,
}

/// One supervised example: state tensor, visit-count policy target, outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub input: StateTensor,
    pub policy: Vec<f64>,
    pub value: f64,
}

struct Layers {
    conv: Vec<(usize, usize, usize)>,
    trunk_w: usize,
    trunk_b: usize,
    heads: [(usize, usize, usize, usize); 2],
}

struct Cache {
    /// Patch matrix (`area_out × c_in·9`) of each conv block's input.
    conv_cols: Vec<Vec<f64>>,
    /// Raw convolution output of each block.
    conv_raw: Vec<Vec<f64>>,
    /// Post-activation of each block; the last is the flattened feature vector.
    conv_out: Vec<Vec<f64>>,
    hidden: Vec<f64>,
    head_hidden: [Vec<f64>; 2],
    policy: Vec<f64>,
    value: f64,
}

impl Network {
    pub fn zeros(shape: NetworkShape) -> Self {
        let specs = layout(&shape);
        let n = shape.param_count();
        Self {
            shape,
            specs,
            params: vec![0.0; n],
        }
    }

    /// He-normal weights, unit scales, small positive shifts, zero biases, stored at f32 precision.
    pub fn init(shape: NetworkShape, rng: &mut ProjectRng) -> Self {
        let mut net = Self::zeros(shape);
        for spec in net.specs.clone() {
            let slot = &mut net.params[spec.offset..spec.offset + spec.len];
            if spec.name.ends_with(".scale") {
                slot.fill(1.0);
            } else if spec.name.ends_with(".shift") {
                // keeps units with an all-zero receptive field off the ReLU kink
                slot.fill(SHIFT_INIT);
            } else if spec.name.ends_with(".weight") {
                let fan_in: usize = spec.dims[1..].iter().product();
                let gain = if spec.name.contains(".out.") { 1.0 } else { 2.0 };
                let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
                for p in slot.iter_mut() {
                    *p = normal.sample(rng);
                }
            }
        }
        net.round_to_f32();
        net
    }

    pub fn from_params(shape: NetworkShape, params: Vec<f64>) -> Result<Self, NetworkError> {
        let expected = shape.param_count();
        if params.len() != expected {
            return Err(NetworkError::ParamCount {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            specs: layout(&shape),
            shape,
            params,
        })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensor_specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            *p = f64::from(*p as f32);
        }
    }

    fn layers(&self) -> Layers {
        let off = |name: &str| self.specs.iter().find(|s| s.name == name).expect("known tensor").offset;
        let conv = (0..self.shape.conv_channels.len())
            .map(|i| {
                (
                    off(&format!("conv{i}.weight")),
                    off(&format!("conv{i}.scale")),
                    off(&format!("conv{i}.shift")),
                )
            })
            .collect();
        let head = |h: &str| {
            (
                off(&format!("{h}.hidden.weight")),
                off(&format!("{h}.hidden.bias")),
                off(&format!("{h}.out.weight")),
                off(&format!("{h}.out.bias")),
            )
        };
        Layers {
            conv,
            trunk_w: off("trunk.weight"),
            trunk_b: off("trunk.bias"),
            heads: [head("policy"), head("value")],
        }
    }

    /// Action probabilities (summing to one) and the value in `(0, 1)`.
    pub fn forward(&self, input: &StateTensor) -> Result<(Vec<f64>, f64), NetworkError> {
        let cache = self.forward_cached(input)?;
        Ok((cache.policy, cache.value))
    }

    fn forward_cached(&self, input: &StateTensor) -> Result<Cache, NetworkError> {
        if input.size != self.shape.grid {
            return Err(NetworkError::InputSize {
                expected: self.shape.grid,
                actual: input.size,
            });
        }
        let lay = self.layers();
        let sides = self.shape.sides();
        let p = &self.params;
        let norm = 1.0 / (1.0 + NORM_EPS).sqrt();

        let mut conv_cols = Vec::new();
        let mut conv_raw = Vec::new();
        let mut conv_out = Vec::new();
        let mut x = input.to_dense();
        let mut c_in = self.shape.in_channels;
        for (i, &c_out) in self.shape.conv_channels.iter().enumerate() {
            let (w, sc, sh) = lay.conv[i];
            let cols = im2col(&x, c_in, sides[i], sides[i + 1]);
            let raw = conv_forward(&cols, c_in * KERNEL * KERNEL, &p[w..w + c_out * c_in * 9], c_out);
            let area = sides[i + 1] * sides[i + 1];
            let mut out = raw.clone();
            for co in 0..c_out {
                let (a, b) = (p[sc + co] * norm, p[sh + co]);
                for v in &mut out[co * area..(co + 1) * area] {
                    *v = (a * *v + b).max(0.0);
                }
            }
            x = out.clone();
            conv_cols.push(cols);
            conv_raw.push(raw);
            conv_out.push(out);
            c_in = c_out;
        }
        if self.shape.conv_channels.is_empty() {
            conv_out.push(x.clone());
        }
        let flat = conv_out.last().expect("feature vector");
        let mut hidden = dense(&p[lay.trunk_w..], &p[lay.trunk_b..], flat, self.shape.hidden);
        relu(&mut hidden);

        let mut head_hidden: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut outputs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for (k, &(w1, b1, w2, b2)) in lay.heads.iter().enumerate() {
            let n_out = if k == 0 { self.shape.actions } else { 1 };
            let mut h = dense(&p[w1..], &p[b1..], &hidden, self.shape.head_hidden);
            relu(&mut h);
            outputs[k] = dense(&p[w2..], &p[b2..], &h, n_out);
            head_hidden[k] = h;
        }
        let policy = softmax(&outputs[0]);
        let value = sigmoid(outputs[1][0]);
        Ok(Cache {
            conv_cols,
            conv_raw,
            conv_out,
            hidden,
            head_hidden,
            policy,
            value,
        })
    }

    /// Mean loss over `batch`.
    pub fn loss(&self, batch: &[TrainingSample]) -> Result<f64, NetworkError> {
        if batch.is_empty() {
            return Err(NetworkError::EmptyBatch);
        }
        let sums: Result<Vec<f64>, NetworkError> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk.iter().try_fold(0.0, |acc, s| {
                    let (p, v) = self.forward(&s.input)?;
                    Ok(acc + sample_loss(&p, v, &s.policy, s.value))
                })
            })
            .collect();
        Ok(sums?.iter().sum::<f64>() / batch.len() as f64)
    }

    /// Mean loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[TrainingSample]) -> Result<(f64, Vec<f64>), NetworkError> {
        if batch.is_empty() {
            return Err(NetworkError::EmptyBatch);
        }
        for s in batch {
            if s.policy.len() != self.shape.actions {
                return Err(NetworkError::TargetSize {
                    expected: self.shape.actions,
                    actual: s.policy.len(),
                });
            }
        }
        let scale = 1.0 / batch.len() as f64;
        let parts: Result<Vec<(f64, Vec<f64>)>, NetworkError> = batch
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for s in chunk {
                    loss += self.backward_into(s, scale, &mut grad)?;
                }
                Ok((loss, grad))
            })
            .collect();
        let mut total = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (l, g) in parts? {
            total += l;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((total * scale, grad))
    }

    /// Adds `scale * dLoss/dParams` for one sample and returns its loss.
    fn backward_into(&self, sample: &TrainingSample, scale: f64, grad: &mut [f64]) -> Result<f64, NetworkError> {
        let cache = self.forward_cached(&sample.input)?;
        let loss = sample_loss(&cache.policy, cache.value, &sample.policy, sample.value);
        let lay = self.layers();
        let p = &self.params;
        let sh = &self.shape;

        // softmax cross-entropy: d/dlogit = mass(target) * p - target
        let target_mass: f64 = sample.policy.iter().sum();
        let d_logits: Vec<f64> = cache
            .policy
            .iter()
            .zip(&sample.policy)
            .map(|(&pr, &t)| scale * (target_mass * pr - t))
            .collect();
        let v = cache.value;
        let d_value_logit = vec![scale * 2.0 * (v - sample.value) * v * (1.0 - v)];

        let mut d_hidden = vec![0.0; sh.hidden];
        for (k, d_out) in [d_logits, d_value_logit].iter().enumerate() {
            let (w1, b1, w2, b2) = lay.heads[k];
            let h = &cache.head_hidden[k];
            let mut d_h = dense_backward(&p[w2..], h, d_out, &mut grad[w2..]);
            for (d, b) in d_out.iter().zip(b2..) {
                grad[b] += d;
            }
            relu_backward(&mut d_h, h);
            let d_in = dense_backward(&p[w1..], &cache.hidden, &d_h, &mut grad[w1..]);
            for (d, b) in d_h.iter().zip(b1..) {
                grad[b] += d;
            }
            for (a, b) in d_hidden.iter_mut().zip(&d_in) {
                *a += b;
            }
        }
        relu_backward(&mut d_hidden, &cache.hidden);
        let flat = cache.conv_out.last().expect("feature vector");
        let mut d_x = dense_backward(&p[lay.trunk_w..], flat, &d_hidden, &mut grad[lay.trunk_w..]);
        for (d, b) in d_hidden.iter().zip(lay.trunk_b..) {
            grad[b] += d;
        }

        let sides = sh.sides();
        let norm = 1.0 / (1.0 + NORM_EPS).sqrt();
        for i in (0..sh.conv_channels.len()).rev() {
            let c_out = sh.conv_channels[i];
            let c_in = if i == 0 {
                sh.in_channels
            } else {
                sh.conv_channels[i - 1]
            };
            let (w, sc, shf) = lay.conv[i];
            let area = sides[i + 1] * sides[i + 1];
            let out = &cache.conv_out[i];
            let raw = &cache.conv_raw[i];
            let mut d_raw = vec![0.0; d_x.len()];
            for co in 0..c_out {
                let a = p[sc + co] * norm;
                let (mut g_scale, mut g_shift) = (0.0, 0.0);
                for j in co * area..(co + 1) * area {
                    if out[j] > 0.0 {
                        let dy = d_x[j];
                        g_scale += dy * raw[j] * norm;
                        g_shift += dy;
                        d_raw[j] = dy * a;
                    }
                }
                grad[sc + co] += g_scale;
                grad[shf + co] += g_shift;
            }
            let need_input = i > 0;
            d_x = conv_backward(
                &cache.conv_cols[i],
                c_in,
                sides[i],
                &p[w..w + c_out * c_in * 9],
                &mut grad[w..w + c_out * c_in * 9],
                &d_raw,
                c_out,
                sides[i + 1],
                need_input,
            );
        }
        Ok(loss)
    }
}

/// Cross-entropy of `policy` against `target_policy` plus the squared value error.
pub fn sample_loss(policy: &[f64], value: f64, target_policy: &[f64], target_value: f64) -> f64 {
    let ce: f64 = target_policy
        .iter()
        .zip(policy)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, p)| -t * p.max(f64::MIN_POSITIVE).ln())
        .sum();
    ce + (value - target_value).powi(2)
}

fn layout(shape: &NetworkShape) -> Vec<TensorSpec> {
    let mut offset = 0;
    shape
        .tensors()
        .into_iter()
        .map(|(name, dims)| {
            let len = dims.iter().product();
            let spec = TensorSpec {
                name,
                dims,
                offset,
                len,
            };
            offset += len;
            spec
        })
        .collect()
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

fn relu_backward(d: &mut [f64], activated: &[f64]) {
    for (g, a) in d.iter_mut().zip(activated) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// `W x + b` with `W` stored row-major as `n_out × x.len()`.
fn dense(w: &[f64], b: &[f64], x: &[f64], n_out: usize) -> Vec<f64> {
    let n_in = x.len();
    (0..n_out)
        .map(|o| {
            let row = &w[o * n_in..(o + 1) * n_in];
            b[o] + dot(row, x)
        })
        .collect()
}

/// Accumulates the weight gradient into `gw` and returns the input gradient.
fn dense_backward(w: &[f64], x: &[f64], d_out: &[f64], gw: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut d_in = vec![0.0; n_in];
    for (o, &d) in d_out.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        axpy(d, x, &mut gw[o * n_in..(o + 1) * n_in]);
        axpy(d, &w[o * n_in..(o + 1) * n_in], &mut d_in);
    }
    d_in
}

/// Input offset of every 3×3 tap of every output cell; `None` for zero padding.
fn taps(side_in: usize, side_out: usize) -> impl Iterator<Item = Option<usize>> {
    (0..side_out * side_out).flat_map(move |pos| {
        let (oy, ox) = (pos / side_out, pos % side_out);
        (0..KERNEL * KERNEL).map(move |k| {
            let iy = (2 * oy + k / KERNEL) as isize - 1;
            let ix = (2 * ox + k % KERNEL) as isize - 1;
            let inside = iy >= 0 && ix >= 0 && (iy as usize) < side_in && (ix as usize) < side_in;
            inside.then(|| iy as usize * side_in + ix as usize)
        })
    })
}

/// Patch matrix for a 3×3, stride 2, zero-padded convolution: one row of
/// `c_in·9` values per output cell, ordered like the weights.
fn im2col(x: &[f64], c_in: usize, side_in: usize, side_out: usize) -> Vec<f64> {
    let area_in = side_in * side_in;
    let k = c_in * KERNEL * KERNEL;
    let taps: Vec<Option<usize>> = taps(side_in, side_out).collect();
    let mut cols = vec![0.0; side_out * side_out * k];
    for (pos, row) in cols.chunks_exact_mut(k).enumerate() {
        let cell = &taps[pos * KERNEL * KERNEL..(pos + 1) * KERNEL * KERNEL];
        for ci in 0..c_in {
            let plane = &x[ci * area_in..(ci + 1) * area_in];
            for (t, tap) in cell.iter().enumerate() {
                if let Some(j) = tap {
                    row[ci * KERNEL * KERNEL + t] = plane[*j];
                }
            }
        }
    }
    cols
}

/// Scatters patch-matrix gradients back onto the input planes.
fn col2im(d_cols: &[f64], c_in: usize, side_in: usize, side_out: usize) -> Vec<f64> {
    let area_in = side_in * side_in;
    let k = c_in * KERNEL * KERNEL;
    let taps: Vec<Option<usize>> = taps(side_in, side_out).collect();
    let mut d_x = vec![0.0; c_in * area_in];
    for (pos, row) in d_cols.chunks_exact(k).enumerate() {
        let cell = &taps[pos * KERNEL * KERNEL..(pos + 1) * KERNEL * KERNEL];
        for ci in 0..c_in {
            for (t, tap) in cell.iter().enumerate() {
                if let Some(j) = tap {
                    d_x[ci * area_in + j] += row[ci * KERNEL * KERNEL + t];
                }
            }
        }
    }
    d_x
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[f64; LANES] = x.try_into().expect("exact chunk");
        let y: &[f64; LANES] = y.try_into().expect("exact chunk");
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    let half = [acc[0] + acc[4], acc[1] + acc[5], acc[2] + acc[6], acc[3] + acc[7]];
    (half[0] + half[2]) + (half[1] + half[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// Convolution as patch-matrix rows dotted with each filter; no bias.
fn conv_forward(cols: &[f64], k: usize, w: &[f64], c_out: usize) -> Vec<f64> {
    let area_out = cols.len() / k;
    let mut out = vec![0.0; c_out * area_out];
    for (pos, patch) in cols.chunks_exact(k).enumerate() {
        for co in 0..c_out {
            out[co * area_out + pos] = dot(&w[co * k..(co + 1) * k], patch);
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    cols: &[f64],
    c_in: usize,
    side_in: usize,
    w: &[f64],
    gw: &mut [f64],
    d_out: &[f64],
    c_out: usize,
    side_out: usize,
    need_input: bool,
) -> Vec<f64> {
    let k = c_in * KERNEL * KERNEL;
    let area_out = side_out * side_out;
    let mut d_cols = if need_input { vec![0.0; cols.len()] } else { Vec::new() };
    for (pos, patch) in cols.chunks_exact(k).enumerate() {
        for co in 0..c_out {
            let d = d_out[co * area_out + pos];
            if d == 0.0 {
                continue;
            }
            axpy(d, patch, &mut gw[co * k..(co + 1) * k]);
            if need_input {
                axpy(d, &w[co * k..(co + 1) * k], &mut d_cols[pos * k..(pos + 1) * k]);
            }
        }
    }
    if need_input {
        col2im(&d_cols, c_in, side_in, side_out)
    } else {
        Vec::new()
    }
}

/// Momentum SGD over a [`Network`]: `v ← μ v + g`, `θ ← θ − lr v`.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub network: Network,
    velocity: Vec<f64>,
    pub momentum: f64,
}

impl Trainer {
    pub fn new(network: Network, momentum: f64) -> Self {
        let n = network.params.len();
        Self {
            network,
            velocity: vec![0.0; n],
            momentum,
        }
    }

    /// One update on `batch`; returns the pre-update mean loss. Parameters are
    /// left untouched when any gradient entry is not finite.
    pub fn step(&mut self, batch: &[TrainingSample], lr: f64) -> Result<f64, NetworkError> {
        let (loss, grad) = self.network.loss_and_gradient(batch)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(NetworkError::NonFinite);
        }
        for ((p, v), g) in self.network.params.iter_mut().zip(&mut self.velocity).zip(&grad) {
            *v = self.momentum * *v + g;
            *p -= lr * *v;
        }
        self.network.round_to_f32();
        Ok(loss)
    }
}
