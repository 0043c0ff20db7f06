// SPDX-License-Identifier: MIT OR Apache-2.0

//! Minimal dense network: affine layers with relu/sigmoid/identity
//! activations, binary cross-entropy and squared-error losses, exact
//! reverse-mode gradients and an Adam optimizer.
//!
//! Weights are stored row-major as `out_dim x in_dim`. Gradients are
//! accumulated (summed) across calls to [`DenseNet::backward`]; callers scale
//! them for batch averaging.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clip used by [`bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::Dimension {
                context: "dense weights".into(),
                expected: in_dim * out_dim,
                got: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::Dimension {
                context: "dense bias".into(),
                expected: out_dim,
                got: bias.len(),
            });
        }
        Ok(Dense { in_dim, out_dim, weights, bias, activation })
    }

    /// Uniform He-style init scaled by fan-in; zero bias.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = (6.0 / in_dim.max(1) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Dense {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let z = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o];
            out.push(self.activation.apply(z));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Dense>,
}

/// Per-layer activations recorded by [`DenseNet::forward_trace`].
/// `values[0]` is the input, `values[l + 1]` the output of layer `l`.
#[derive(Debug, Clone)]
pub struct Trace {
    values: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("trace holds the input")
    }
}

/// Gradient buffers shaped like a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Gradients {
            weights: net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        self.weights.iter_mut().for_each(|w| w.fill(0.0));
        self.bias.iter_mut().for_each(|b| b.fill(0.0));
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.weights.iter_mut().chain(self.bias.iter_mut()) {
            block.iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Flattened view in the same order as [`DenseNet::params`].
    pub fn flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| w.iter().chain(b.iter()).copied())
            .collect()
    }
}

impl DenseNet {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension {
                    context: "adjacent layers".into(),
                    expected: pair[0].out_dim,
                    got: pair[1].in_dim,
                });
            }
        }
        let net = DenseNet { layers };
        if !net.params().iter().all(|p| p.is_finite()) {
            return Err(Error::Config("network parameters must be finite".into()));
        }
        Ok(net)
    }

    /// Randomly initialised network. `widths` lists every layer size including
    /// the input; `activations` has one entry per layer.
    pub fn init<R: Rng + ?Sized>(
        widths: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() != activations.len() + 1 {
            return Err(Error::Dimension {
                context: "activation list".into(),
                expected: widths.len().saturating_sub(1),
                got: activations.len(),
            });
        }
        let layers = widths
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| Dense::init(w[0], w[1], act, rng))
            .collect();
        DenseNet::new(layers)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Dimension {
                context: "parameter vector".into(),
                expected: self.param_count(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                context: "network input".into(),
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace> {
        self.check_input(x)?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(values.last().expect("non-empty"), &mut out);
            values.push(out);
        }
        Ok(Trace { values })
    }

    /// Backpropagates `grad_output` (dL/d output activations) through the
    /// recorded pass, adds parameter gradients into `grads`, and returns
    /// dL/d input.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64], grads: &mut Gradients) -> Vec<f64> {
        debug_assert_eq!(grad_output.len(), self.output_dim());
        let mut upstream = grad_output.to_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.values[l];
            let output = &trace.values[l + 1];
            let delta: Vec<f64> = upstream
                .iter()
                .zip(output)
                .map(|(g, &a)| g * layer.activation.derivative_from_output(a))
                .collect();
            let gw = &mut grads.weights[l];
            let gb = &mut grads.bias[l];
            let mut down = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    gw[row + i] += d * input[i];
                    down[i] += d * layer.weights[row + i];
                }
            }
            upstream = down;
        }
        upstream
    }
}

/// Binary cross-entropy with `p` clipped to `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce(p: f64, t: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
}

/// dBCE/dp, evaluated at the clipped probability.
pub fn bce_grad(p: f64, t: f64) -> f64 {
    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    (p - t) / (p * (1.0 - p))
}

pub fn mse(p: f64, t: f64) -> f64 {
    (p - t) * (p - t)
}

pub fn mse_grad(p: f64, t: f64) -> f64 {
    2.0 * (p - t)
}

/// Mean of componentwise squared errors.
pub fn mse_vec(p: &[f64], t: &[f64]) -> Result<f64> {
    if p.len() != t.len() {
        return Err(Error::Dimension {
            context: "mse".into(),
            expected: t.len(),
            got: p.len(),
        });
    }
    if p.is_empty() {
        return Ok(0.0);
    }
    Ok(p.iter().zip(t).map(|(a, b)| mse(*a, *b)).sum::<f64>() / p.len() as f64)
}

/// Adaptive-moment optimizer state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {learning_rate} must be > 0")));
        }
        Ok(Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<()> {
        for (l, (gw, gb)) in grads.weights.iter().zip(&grads.bias).enumerate() {
            if !gw.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("layer{l}.weights")));
            }
            if !gb.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("layer{l}.bias")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let blocks = [
                (&mut layer.weights, &grads.weights[l], &mut self.m.weights[l], &mut self.v.weights[l]),
                (&mut layer.bias, &grads.bias[l], &mut self.m.bias[l], &mut self.v.bias[l]),
            ];
            for (params, g, m, v) in blocks {
                for i in 0..params.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
                }
            }
        }
        Ok(())
    }
}
