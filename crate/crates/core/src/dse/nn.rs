//! Minimal dense networks for the actor and critic: f64 forward/backward
//! with ReLU hidden layers, flat parameter indexing for gradient checks,
//! and a per-parameter Adam optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Dense {
    /// Row-major weights, `out x in`.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    fn new(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        // Uniform fan-in init keeps early critic outputs small.
        let bound = (1.0 / n_in as f64).sqrt();
        let w = (0..n_in * n_out).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = vec![0.0; n_out];
        Self { w, b, n_in, n_out }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let mut acc = self.b[o];
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
}

/// Output nonlinearity of the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

/// Fully-connected network with ReLU hidden layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub output: OutputActivation,
}

/// Gradients with the same layout as [`Mlp`] parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub dw: Vec<Vec<f64>>,
    pub db: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros(net: &Mlp) -> Self {
        Self {
            dw: net.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            db: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.dw.iter_mut().flatten().chain(self.db.iter_mut().flatten()) {
            *g *= s;
        }
    }
}

/// Forward-pass cache for one input, consumed by `backward`.
pub struct Tape {
    /// Input plus post-activation outputs of every layer.
    activations: Vec<Vec<f64>>,
    /// Pre-activation outputs of every layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(sizes: &[usize], output: OutputActivation, rng: &mut ChaCha8Rng) -> Self {
        let layers = sizes
            .windows(2)
            .map(|pair| Dense::new(pair[0], pair[1], rng))
            .collect();
        Self { layers, output }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.forward_taped(x).1
    }

    /// Forward pass returning the cache needed for backprop. The scalar
    /// output is the single unit of the last layer.
    pub fn forward_taped(&self, x: &[f64]) -> (Tape, f64) {
        debug_assert_eq!(self.layers.last().map(|l| l.n_out), Some(1));
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        let mut buf = Vec::new();
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut buf);
            pre.push(buf.clone());
            if li < last {
                for v in buf.iter_mut() {
                    *v = v.max(0.0);
                }
            } else if self.output == OutputActivation::Sigmoid {
                for v in buf.iter_mut() {
                    *v = 1.0 / (1.0 + (-*v).exp());
                }
            }
            activations.push(buf.clone());
            std::mem::swap(&mut cur, &mut buf);
        }
        let out = activations.last().unwrap()[0];
        (Tape { activations, pre }, out)
    }

    /// Backpropagate `d_out` (gradient of the loss w.r.t. the scalar
    /// output), accumulating into `grads` and returning the gradient
    /// w.r.t. the input vector.
    pub fn backward(&self, tape: &Tape, d_out: f64, grads: &mut MlpGrads) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut delta = vec![match self.output {
            OutputActivation::Linear => d_out,
            OutputActivation::Sigmoid => {
                let y = tape.activations[last + 1][0];
                d_out * y * (1.0 - y)
            }
        }];
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &tape.activations[li];
            if li < last {
                for (d, p) in delta.iter_mut().zip(&tape.pre[li]) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let mut d_input = vec![0.0; layer.n_in];
            for o in 0..layer.n_out {
                let d = delta[o];
                grads.db[li][o] += d;
                let row = &mut grads.dw[li][o * layer.n_in..(o + 1) * layer.n_in];
                for i in 0..layer.n_in {
                    row[i] += d * input[i];
                    d_input[i] += d * layer.w[o * layer.n_in + i];
                }
            }
            delta = d_input;
        }
        delta
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Flat parameter access: weights of layer 0, biases of layer 0,
    /// weights of layer 1, and so on.
    pub fn get_param(&self, idx: usize) -> f64 {
        let mut i = idx;
        for l in &self.layers {
            if i < l.w.len() {
                return l.w[i];
            }
            i -= l.w.len();
            if i < l.b.len() {
                return l.b[i];
            }
            i -= l.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let mut i = idx;
        for l in self.layers.iter_mut() {
            if i < l.w.len() {
                l.w[i] = value;
                return;
            }
            i -= l.w.len();
            if i < l.b.len() {
                l.b[i] = value;
                return;
            }
            i -= l.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn grad_param(grads: &MlpGrads, idx: usize) -> f64 {
        let mut i = idx;
        for (dw, db) in grads.dw.iter().zip(&grads.db) {
            if i < dw.len() {
                return dw[i];
            }
            i -= dw.len();
            if i < db.len() {
                return db[i];
            }
            i -= db.len();
        }
        panic!("parameter index {idx} out of range");
    }

    /// In-place soft update: self = tau * online + (1 - tau) * self.
    pub fn soft_update_from(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            for (tv, ov) in t.w.iter_mut().zip(&o.w) {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
            for (tv, ov) in t.b.iter_mut().zip(&o.b) {
                *tv = tau * ov + (1.0 - tau) * *tv;
            }
        }
    }
}

/// Per-parameter Adam state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let shape: Vec<usize> = net.layers.iter().flat_map(|l| [l.w.len(), l.b.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shape.iter().map(|&n| vec![0.0; n]).collect(),
            v: shape.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &MlpGrads) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let mut slot = 0;
        for (li, layer) in net.layers.iter_mut().enumerate() {
            for (params, gs) in [(&mut layer.w, &grads.dw[li]), (&mut layer.b, &grads.db[li])] {
                let m = &mut self.m[slot];
                let v = &mut self.v[slot];
                for (i, p) in params.iter_mut().enumerate() {
                    let g = gs[i];
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
                }
                slot += 1;
            }
        }
    }
}
