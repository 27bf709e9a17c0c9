//! A small dense network with tanh hidden layers, the Adam optimizer and a
//! running observation normalizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected network; parameters live in one flat vector laid out
/// layer by layer as `W (out × in, row-major)` followed by `b (out)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer outputs recorded by [`Mlp::forward_cached`] for backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty cache")
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases; the last layer is scaled by
    /// `out_scale`.
    pub fn new(sizes: &[usize], out_scale: f64, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "network needs an input and an output layer");
        let mut params = Vec::new();
        let n_layers = sizes.len() - 1;
        for l in 0..n_layers {
            let (nin, nout) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (nin + nout) as f64).sqrt();
            let scale = if l + 1 == n_layers { out_scale } else { 1.0 };
            params.extend((0..nin * nout).map(|_| scale * rng.gen_range(-limit..=limit)));
            params.extend(std::iter::repeat_n(0.0, nout));
        }
        Mlp { sizes: sizes.to_vec(), params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("sizes")
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).acts.pop().expect("output")
    }

    pub fn forward_cached(&self, x: &[f64]) -> Cache {
        assert_eq!(x.len(), self.sizes[0], "input width");
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..n_layers {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + nin * nout];
            let b = &self.params[off + nin * nout..off + nin * nout + nout];
            let input = &acts[l];
            let out: Vec<f64> = (0..nout)
                .map(|o| {
                    let z = b[o] + w[o * nin..(o + 1) * nin].iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                    if l + 1 < n_layers {
                        z.tanh()
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            off += nin * nout + nout;
        }
        Cache { acts }
    }

    /// Adds `∂L/∂θ` to `grad` given `∂L/∂output`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64], grad: &mut [f64]) {
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..nout {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * nin..off + (o + 1) * nin];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + nin * nout + o] += d;
            }
            if l > 0 {
                let w = &self.params[off..off + nin * nout];
                let mut next = vec![0.0; nin];
                for o in 0..nout {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (n, w) in next.iter_mut().zip(&w[o * nin..(o + 1) * nin]) {
                        *n += w * d;
                    }
                }
                for (n, a) in next.iter_mut().zip(input) {
                    *n *= 1.0 - a * a;
                }
                delta = next;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Per-feature running mean and variance (parallel Welford updates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    count: f64,
    mean: Vec<f64>,
    var: Vec<f64>,
}

impl RunningNorm {
    pub const CLIP: f64 = 5.0;

    pub fn new(dim: usize) -> Self {
        RunningNorm { count: 0.0, mean: vec![0.0; dim], var: vec![1.0; dim] }
    }

    pub fn count(&self) -> f64 {
        self.count
    }

    pub fn update(&mut self, batch: &[Vec<f64>]) {
        if batch.is_empty() {
            return;
        }
        let n = batch.len() as f64;
        let dim = self.mean.len();
        for j in 0..dim {
            let bm = batch.iter().map(|x| x[j]).sum::<f64>() / n;
            let bv = batch.iter().map(|x| (x[j] - bm).powi(2)).sum::<f64>() / n;
            let total = self.count + n;
            let d = bm - self.mean[j];
            let m2 = self.var[j] * self.count + bv * n + d * d * self.count * n / total;
            self.mean[j] += d * n / total;
            self.var[j] = m2 / total;
        }
        self.count += n;
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| ((x - m) / (v + 1e-8).sqrt()).clamp(-Self::CLIP, Self::CLIP))
            .collect()
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}
