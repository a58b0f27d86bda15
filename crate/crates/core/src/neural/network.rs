//! Dense feed-forward network with optional residual blocks.
//!
//! All parameters live in one flat buffer. Layer `l` occupies
//! `[offset_l, offset_l + in*out)` for its weights, stored row-major as
//! `W[i][o]` (input `i` to output `o`), followed by `out` biases.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, ModelConfig};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    /// Hidden layers are activated; the final layer is linear.
    pub activated: bool,
    /// Adds the layer input to the pre-activation, `f(Wx + b + x)`.
    pub residual: bool,
}

impl LayerShape {
    pub fn param_count(&self) -> usize {
        self.inputs * self.outputs + self.outputs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<LayerShape>,
    offsets: Vec<usize>,
    params: Vec<f64>,
    activation: Activation,
}

/// Intermediate values kept by [`Network::forward_train`] for backprop.
#[derive(Debug, Default)]
pub struct Cache {
    rows: usize,
    /// `values[l]` is the input of layer `l`; the last entry is the output.
    values: Vec<Vec<f64>>,
    delta: Vec<f64>,
    d_input: Vec<f64>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.values.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activated value `a = f(z)`.
    #[inline]
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl Network {
    /// Layer layout for a config: input projection, hidden blocks, linear head.
    pub fn layout(config: &ModelConfig) -> Vec<LayerShape> {
        let mut layers = Vec::with_capacity(config.hidden_widths.len() + 1);
        let mut prev = config.input_dim;
        for (i, &w) in config.hidden_widths.iter().enumerate() {
            layers.push(LayerShape {
                inputs: prev,
                outputs: w,
                activated: true,
                residual: config.skip_connections && i > 0 && prev == w,
            });
            prev = w;
        }
        layers.push(LayerShape {
            inputs: prev,
            outputs: config.output_dim,
            activated: false,
            residual: false,
        });
        layers
    }

    /// Randomly initialised network: weights and biases of every layer
    /// uniform on `±1/sqrt(fan_in)`.
    pub fn new(config: &ModelConfig) -> Self {
        let mut net = Self::zeros(Self::layout(config), config.activation);
        let mut rng = seed::rng(config.init_seed);
        for l in 0..net.layers.len() {
            let s = net.layers[l];
            let limit = 1.0 / (s.inputs as f64).sqrt();
            let off = net.offsets[l];
            for p in &mut net.params[off..off + s.param_count()] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(layers: Vec<LayerShape>, activation: Activation) -> Self {
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for s in &layers {
            offsets.push(total);
            total += s.param_count();
        }
        Self {
            layers,
            offsets,
            params: vec![0.0; total],
            activation,
        }
    }

    pub fn from_parts(layers: Vec<LayerShape>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(layers, activation);
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                found: params.len(),
            });
        }
        for w in net.layers.windows(2) {
            if w[0].outputs != w[1].inputs {
                return Err(Error::InvalidArgument("layer shapes do not chain".into()));
            }
        }
        if net.layers.iter().any(|s| s.residual && s.inputs != s.outputs) {
            return Err(Error::InvalidArgument("residual layer must preserve width".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn layers(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|s| s.outputs).unwrap_or(0)
    }

    /// Mutable weights (`in × out`) and biases of layer `l`.
    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let s = self.layers[l];
        let off = self.offsets[l];
        let (w, b) = self.params[off..off + s.param_count()].split_at_mut(s.inputs * s.outputs);
        (w, b)
    }

    fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let s = self.layers[l];
        let off = self.offsets[l];
        self.params[off..off + s.param_count()].split_at(s.inputs * s.outputs)
    }

    fn apply_layer(&self, l: usize, input: &[f64], rows: usize, out: &mut Vec<f64>) {
        let s = self.layers[l];
        let (w, b) = self.layer(l);
        out.clear();
        out.resize(rows * s.outputs, 0.0);
        for (x, z) in input.chunks_exact(s.inputs).zip(out.chunks_exact_mut(s.outputs)) {
            z.copy_from_slice(b);
            for (i, &xi) in x.iter().enumerate() {
                if xi != 0.0 {
                    axpy(xi, &w[i * s.outputs..(i + 1) * s.outputs], z);
                }
            }
        }
        if s.residual {
            for (o, x) in out.iter_mut().zip(input) {
                *o += x;
            }
        }
        if s.activated {
            for v in out.iter_mut() {
                *v = self.activation.apply(*v);
            }
        }
    }

    /// Inference on `rows` row-major samples.
    pub fn forward(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in 0..self.layers.len() {
            self.apply_layer(l, &cur, rows, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    /// Forward pass keeping what [`backward`](Self::backward) needs.
    pub fn forward_train(&self, input: &[f64], rows: usize, cache: &mut Cache) {
        let n_layers = self.layers.len();
        cache.rows = rows;
        cache.values.resize_with(n_layers + 1, Vec::new);
        cache.values[0].clear();
        cache.values[0].extend_from_slice(input);
        for l in 0..n_layers {
            let (head, tail) = cache.values.split_at_mut(l + 1);
            self.apply_layer(l, &head[l], rows, &mut tail[0]);
        }
    }

    /// Accumulates parameter gradients into `grad` given `d_out`, the loss
    /// gradient with respect to the network output of the cached pass.
    pub fn backward(&self, cache: &mut Cache, d_out: &[f64], grad: &mut [f64]) {
        let rows = cache.rows;
        let mut delta = std::mem::take(&mut cache.delta);
        let mut d_input = std::mem::take(&mut cache.d_input);
        delta.clear();
        delta.extend_from_slice(d_out);
        for l in (0..self.layers.len()).rev() {
            let s = self.layers[l];
            let input = &cache.values[l];
            let off = self.offsets[l];
            let (gw, gb) = grad[off..off + s.param_count()].split_at_mut(s.inputs * s.outputs);
            let (w, _) = self.layer(l);

            // delta holds dL/d(layer output); turn it into dL/d(pre-activation).
            if s.activated {
                for (d, &a) in delta.iter_mut().zip(&cache.values[l + 1]) {
                    *d *= self.activation.derivative(a);
                }
            }
            for (x, dz) in input.chunks_exact(s.inputs).zip(delta.chunks_exact(s.outputs)) {
                axpy(1.0, dz, gb);
                for (i, &xi) in x.iter().enumerate() {
                    if xi != 0.0 {
                        axpy(xi, dz, &mut gw[i * s.outputs..(i + 1) * s.outputs]);
                    }
                }
            }
            if l == 0 {
                break;
            }
            d_input.clear();
            d_input.resize(rows * s.inputs, 0.0);
            for (dx, dz) in d_input.chunks_exact_mut(s.inputs).zip(delta.chunks_exact(s.outputs)) {
                for (i, v) in dx.iter_mut().enumerate() {
                    *v = dot(&w[i * s.outputs..(i + 1) * s.outputs], dz);
                }
            }
            if s.residual {
                for (d, skip) in d_input.iter_mut().zip(&delta) {
                    *d += skip;
                }
            }
            std::mem::swap(&mut delta, &mut d_input);
        }
        cache.delta = delta;
        cache.d_input = d_input;
    }

    /// Mean squared error over all outputs of the batch; when `grad` is given
    /// its gradient is accumulated there.
    pub fn mse(&self, input: &[f64], target: &[f64], rows: usize, cache: &mut Cache, grad: Option<&mut [f64]>) -> f64 {
        self.forward_train(input, rows, cache);
        let out = cache.output();
        let count = out.len() as f64;
        let mut loss = 0.0;
        let mut d_out = Vec::with_capacity(out.len());
        for (o, t) in out.iter().zip(target) {
            let e = o - t;
            loss += e * e;
            d_out.push(2.0 * e / count);
        }
        if let Some(g) = grad {
            self.backward(cache, &d_out, g);
        }
        loss / count
    }
}
