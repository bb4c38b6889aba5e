//! Minimal fully connected building blocks with hand-written backward passes.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Affine layer `y = W x + b`, `W` stored row-major as `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let mut layer = Self::zeros(n_in, n_out);
        layer.w.iter_mut().for_each(|w| *w = dist.sample(rng));
        layer
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.n_in, self.n_out)
    }

    pub fn forward(&self, x: &[f64], y: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.n_in);
        y.clear();
        y.extend(self.w.chunks_exact(self.n_in).zip(&self.b).map(|(row, &b)| {
            row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b
        }));
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.n_in];
        for (o, &g) in dy.iter().enumerate() {
            grad.b[o] += g;
            if g == 0.0 {
                continue;
            }
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut grad.w[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Backprop through softmax: given `p = softmax(l)` and `dL/dp`, returns `dL/dl`.
pub fn softmax_backward(p: &[f64], dp: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(dp).map(|(a, b)| a * b).sum();
    p.iter().zip(dp).map(|(p, d)| p * (d - dot)).collect()
}

/// Adaptive moment estimation over a flat list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// Layer-by-layer activations; `acts[0]` is the scaled input, `acts[last]`
/// the linear output.
pub(crate) struct Trace {
    pub acts: Vec<Vec<f64>>,
}

pub(crate) fn run_stack(layers: &[Dense], input: Vec<f64>) -> Trace {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(input);
    for (k, layer) in layers.iter().enumerate() {
        let mut y = Vec::new();
        layer.forward(acts.last().unwrap(), &mut y);
        if k + 1 < layers.len() {
            y.iter_mut().for_each(|v| *v = v.tanh());
        }
        acts.push(y);
    }
    Trace { acts }
}

/// Backprop from `d_out` (gradient of the linear output) to the stack input.
pub(crate) fn backprop_stack(layers: &[Dense], trace: &Trace, d_out: Vec<f64>, grads: &mut [Dense]) -> Vec<f64> {
    let mut delta = d_out;
    for k in (0..layers.len()).rev() {
        let dx = layers[k].backward(&trace.acts[k], &delta, &mut grads[k]);
        if k == 0 {
            return dx;
        }
        // acts[k] = tanh(pre-activation)
        delta = dx
            .iter()
            .zip(&trace.acts[k])
            .map(|(g, a)| g * (1.0 - a * a))
            .collect();
    }
    unreachable!("stacks are non-empty")
}
