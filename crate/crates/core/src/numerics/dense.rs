use std::ops::Range;

use super::{Parameters, Prng, Tensor};
use crate::{GscError, Result};

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_C: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    /// tanh approximation
    Gelu,
    Silu,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::Gelu => 1,
            Activation::Silu => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::Gelu),
            2 => Ok(Activation::Silu),
            t => Err(GscError::Corrupt(format!("unknown activation tag {t}"))),
        }
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Gelu => {
                let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
            Activation::Silu => x / (1.0 + (-x).exp()),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Gelu => {
                let u = SQRT_2_OVER_PI * (x + GELU_C * x * x * x);
                let th = u.tanh();
                let du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_C * x * x);
                0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
            }
            Activation::Silu => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 + x * (1.0 - s))
            }
        }
    }

    pub fn apply_slice(self, pre: &[f64], out: &mut [f64]) {
        for (o, &p) in out.iter_mut().zip(pre) {
            *o = self.apply(p);
        }
    }

    /// `grad *= act'(pre)` in place.
    pub fn backprop_slice(self, pre: &[f64], grad: &mut [f64]) {
        if self == Activation::Linear {
            return;
        }
        for (g, &p) in grad.iter_mut().zip(pre) {
            *g *= self.derivative(p);
        }
    }
}

/// Affine map `y = W x + b`, `W` stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Linear {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Gaussian weights with standard deviation `gain / sqrt(inputs)`, zero bias.
    pub fn random(inputs: usize, outputs: usize, gain: f64, prng: &mut Prng) -> Self {
        let mut l = Linear::zeros(inputs, outputs);
        let std = gain / (inputs as f64).sqrt();
        l.weight.iter_mut().for_each(|w| *w = std * prng.normal());
        l
    }

    pub fn identity(n: usize) -> Self {
        let mut l = Linear::zeros(n, n);
        for i in 0..n {
            l.weight[i * n + i] = 1.0;
        }
        l
    }

    /// `out = W x + b`.
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(out.len(), self.outputs);
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weight.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = b + dot(row, x);
        }
    }

    /// `out += W x` (no bias).
    pub fn accumulate_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.weight.chunks_exact(self.inputs)) {
            *o += dot(row, x);
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs];
        self.forward_into(x, &mut out);
        out
    }

    /// Accumulates `dW += dy xᵀ`, `db += dy` into `grad` and, when given,
    /// `dx += Wᵀ dy`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: Option<&mut Linear>, dx: Option<&mut [f64]>) {
        if let Some(g) = grad {
            for ((grow, gb), &d) in g
                .weight
                .chunks_exact_mut(self.inputs)
                .zip(g.bias.iter_mut())
                .zip(dy)
            {
                *gb += d;
                if d != 0.0 {
                    axpy(d, x, grow);
                }
            }
        }
        if let Some(dx) = dx {
            for (row, &d) in self.weight.chunks_exact(self.inputs).zip(dy) {
                if d != 0.0 {
                    axpy(d, row, dx);
                }
            }
        }
    }
}

impl Parameters for Linear {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.weight);
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize; the order is fixed so the
    // result is still deterministic.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..a.len() {
        s += a[j] * b[j];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub linear: Linear,
    pub activation: Activation,
}

/// Stack of dense layers. Each range in `residual_blocks` marks layers whose
/// combined output is added to the block's input.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Layer>,
    pub residual_blocks: Vec<Range<usize>>,
}

struct Trace {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl DenseNet {
    pub fn new(layers: Vec<Layer>, residual_blocks: Vec<Range<usize>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(GscError::invalid("network needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].linear.outputs != w[1].linear.inputs {
                return Err(GscError::dims(w[0].linear.outputs, w[1].linear.inputs));
            }
        }
        let mut last_end = 0;
        for r in &residual_blocks {
            if r.start >= r.end || r.end > layers.len() || r.start < last_end {
                return Err(GscError::invalid(format!("bad residual block {r:?}")));
            }
            let din = layers[r.start].linear.inputs;
            let dout = layers[r.end - 1].linear.outputs;
            if din != dout {
                return Err(GscError::dims(din, dout));
            }
            last_end = r.end;
        }
        Ok(DenseNet {
            layers,
            residual_blocks,
        })
    }

    /// Random MLP over `dims` with `activation` on hidden layers and a linear
    /// output layer.
    pub fn mlp(dims: &[usize], activation: Activation, prng: &mut Prng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(GscError::invalid("mlp needs at least input and output dims"));
        }
        let n = dims.len() - 1;
        let layers = (0..n)
            .map(|i| Layer {
                linear: Linear::random(dims[i], dims[i + 1], 1.0, prng),
                activation: if i + 1 == n { Activation::Linear } else { activation },
            })
            .collect();
        DenseNet::new(layers, Vec::new())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].linear.inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.linear.outputs).unwrap_or(0)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn block_starting_at(&self, i: usize) -> Option<&Range<usize>> {
        self.residual_blocks.iter().find(|r| r.start == i)
    }

    fn block_ending_at(&self, i: usize) -> Option<&Range<usize>> {
        self.residual_blocks.iter().find(|r| r.end == i + 1)
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = input.to_vec();
        let mut skip: Option<Vec<f64>> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            if self.block_starting_at(i).is_some() {
                skip = Some(h.clone());
            }
            let z = layer.linear.forward(&h);
            let mut out = vec![0.0; z.len()];
            layer.activation.apply_slice(&z, &mut out);
            inputs.push(std::mem::replace(&mut h, out));
            pre.push(z);
            if self.block_ending_at(i).is_some() {
                if let Some(s) = skip.take() {
                    axpy(1.0, &s, &mut h);
                }
            }
        }
        Trace {
            inputs,
            pre,
            output: h,
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.len() != self.input_dim() {
            return Err(GscError::dims(self.input_dim(), input.len()));
        }
        Ok(Tensor::from_vec(self.forward_slice(input.data())))
    }

    pub fn forward_slice(&self, input: &[f64]) -> Vec<f64> {
        self.trace(input).output
    }

    /// Reverse-mode gradients of `upstream · forward(input)`.
    pub fn backward(&self, input: &Tensor, upstream: &Tensor) -> Result<(DenseNet, Tensor)> {
        if input.len() != self.input_dim() {
            return Err(GscError::dims(self.input_dim(), input.len()));
        }
        if upstream.len() != self.output_dim() {
            return Err(GscError::dims(self.output_dim(), upstream.len()));
        }
        let mut grads = self.zeros_like();
        let dx = self.backward_slice(input.data(), upstream.data(), &mut grads);
        Ok((grads, Tensor::from_vec(dx)))
    }

    /// Accumulates parameter gradients into `grads`; returns the input gradient.
    pub fn backward_slice(&self, input: &[f64], upstream: &[f64], grads: &mut DenseNet) -> Vec<f64> {
        let tr = self.trace(input);
        let mut g = upstream.to_vec();
        let mut skip_grad: Option<Vec<f64>> = None;
        for i in (0..self.layers.len()).rev() {
            if self.block_ending_at(i).is_some() {
                skip_grad = Some(g.clone());
            }
            let layer = &self.layers[i];
            layer.activation.backprop_slice(&tr.pre[i], &mut g);
            let mut dx = vec![0.0; layer.linear.inputs];
            layer
                .linear
                .backward(&tr.inputs[i], &g, Some(&mut grads.layers[i].linear), Some(&mut dx));
            g = dx;
            if self.block_starting_at(i).is_some() {
                if let Some(s) = skip_grad.take() {
                    axpy(1.0, &s, &mut g);
                }
            }
        }
        g
    }
}

impl Parameters for DenseNet {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.iter().for_each(|l| l.linear.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        self.layers.iter_mut().for_each(|l| l.linear.visit_mut(f));
    }
}
