//! Feedforward categorical policy with hand-written forward and reverse passes.
//!
//! Parameters live in one flat buffer, laid out layer by layer as a row-major
//! `out × in` weight block followed by the `out` biases. Gradients use the
//! same layout, which keeps the optimizer a plain elementwise loop.

mod adam;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Floor applied to the second distribution inside [`categorical_kl`].
pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Relu => {
                if h > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Architecture(format!("unknown activation `{other}`"))),
        }
    }
}

/// Weights and biases of an MLP with a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    sizes: Vec<usize>,
    activation: Activation,
    values: Vec<f64>,
}

/// Gradient with the same flat layout as [`PolicyParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad(pub Vec<f64>);

impl ParamGrad {
    pub fn zeros_like(params: &PolicyParams) -> Self {
        ParamGrad(vec![0.0; params.len()])
    }

    pub fn add_scaled(&mut self, other: &ParamGrad, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::Architecture(format!(
            "need input, at least one hidden layer and an output layer; got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Architecture(format!(
            "zero-width layer in {sizes:?}"
        )));
    }
    Ok(())
}

impl PolicyParams {
    /// Glorot-uniform hidden weights, output weights shrunk by 100 so the
    /// initial policy is close to uniform, zero biases.
    pub fn init(sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        check_sizes(sizes)?;
        let mut rng = SimRng::new(seed);
        let mut values = Vec::with_capacity(param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            if l == last {
                limit *= 0.01;
            }
            values.extend((0..fan_in * fan_out).map(|_| rng.uniform_range(-limit, limit)));
            values.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            values,
        })
    }

    /// Parameters with every weight and bias set to zero.
    pub fn zeros(sizes: &[usize], activation: Activation) -> Result<Self> {
        check_sizes(sizes)?;
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            values: vec![0.0; param_count(sizes)],
        })
    }

    pub fn from_values(sizes: &[usize], activation: Activation, values: Vec<f64>) -> Result<Self> {
        check_sizes(sizes)?;
        let expected = param_count(sizes);
        if values.len() != expected {
            return Err(Error::Dimension {
                expected,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy parameter".into()));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            values,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_actions(&self) -> usize {
        *self.sizes.last().expect("non-empty sizes")
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &PolicyParams) -> bool {
        self.sizes == other.sizes && self.activation == other.activation
    }

    /// Order-sensitive checksum of the raw parameter bits.
    pub fn checksum(&self) -> u64 {
        self.values.iter().fold(0xcbf2_9ce4_8422_2325, |h, v| {
            crate::rng::mix64(h ^ v.to_bits())
        })
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.sizes.windows(2).scan(0, |off, w| {
            let start = *off;
            *off += w[0] * w[1] + w[1];
            Some((start, w[0], w[1]))
        })
    }

    pub fn forward(&self, state: &[f64]) -> Result<PolicyOutput> {
        if state.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                found: state.len(),
            });
        }
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy input".into()));
        }
        let n_layers = self.sizes.len() - 1;
        let mut activations = Vec::with_capacity(n_layers);
        let mut x = state.to_vec();
        for (l, (off, n_in, n_out)) in self.layers().enumerate() {
            let w = &self.values[off..off + n_in * n_out];
            let b = &self.values[off + n_in * n_out..off + n_in * n_out + n_out];
            let mut z: Vec<f64> = w
                .chunks_exact(n_in)
                .zip(b)
                .map(|(row, bias)| bias + row.iter().zip(&x).map(|(a, c)| a * c).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            activations.push(std::mem::replace(&mut x, z));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy logits".into()));
        }
        Ok(PolicyOutput::from_logits(x, activations))
    }

    /// Reverse pass: gradient of `Σ_a dlogits[a] · logits[a]` w.r.t. every parameter.
    pub fn backward(&self, output: &PolicyOutput, dlogits: &[f64]) -> ParamGrad {
        let mut grad = ParamGrad::zeros_like(self);
        let layers: Vec<_> = self.layers().collect();
        let mut delta = dlogits.to_vec();
        for (l, &(off, n_in, n_out)) in layers.iter().enumerate().rev() {
            let input = &output.activations[l];
            let (gw, gb) = grad.0[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (o, d) in delta.iter().enumerate() {
                gb[o] = *d;
                for (i, x) in input.iter().enumerate() {
                    gw[o * n_in + i] = d * x;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.values[off..off + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (i, p) in prev.iter_mut().enumerate() {
                    *p += w[o * n_in + i] * d;
                }
            }
            for (p, h) in prev.iter_mut().zip(input) {
                *p *= self.activation.derivative_from_output(*h);
            }
            delta = prev;
        }
        grad
    }

    /// Gradient of `log π(action | state)`.
    pub fn grad_logprob(&self, state: &[f64], action: usize) -> Result<ParamGrad> {
        let out = self.forward(state)?;
        let dlogits = out.logprob_logit_grad(action)?;
        Ok(self.backward(&out, &dlogits))
    }
}

/// Logits, probabilities and the per-layer inputs needed by the reverse pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
    activations: Vec<Vec<f64>>,
}

impl PolicyOutput {
    fn from_logits(logits: Vec<f64>, activations: Vec<Vec<f64>>) -> Self {
        let log_probs = log_softmax(&logits);
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Self {
            logits,
            probs,
            log_probs,
            activations,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.logits.len()
    }

    /// `∂ log π(action) / ∂ logits = onehot(action) - π`.
    pub fn logprob_logit_grad(&self, action: usize) -> Result<Vec<f64>> {
        if action >= self.num_actions() {
            return Err(Error::ActionOutOfRange {
                action,
                actions: self.num_actions(),
            });
        }
        let mut g: Vec<f64> = self.probs.iter().map(|p| -p).collect();
        g[action] += 1.0;
        Ok(g)
    }

    /// Inverse-CDF draw; returns the action and its log-probability.
    pub fn sample(&self, rng: &mut SimRng) -> (usize, f64) {
        let u = rng.uniform();
        let mut cum = 0.0;
        let mut chosen = None;
        for (a, p) in self.probs.iter().enumerate() {
            if *p <= 0.0 {
                continue;
            }
            cum += p;
            chosen = Some(a);
            if u < cum {
                break;
            }
        }
        let a = chosen.unwrap_or(0);
        (a, self.log_probs[a])
    }
}

/// `logits - logsumexp(logits)`, computed after subtracting the max logit.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `KL(p ‖ q) = Σ p_a log(p_a / q_a)`, with `0 log 0 = 0` and `q` floored at [`KL_FLOOR`].
pub fn categorical_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            found: q.len(),
        });
    }
    if p.iter().chain(q).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KL input".into()));
    }
    Ok(p.iter()
        .zip(q)
        .filter(|(pa, _)| **pa > 0.0)
        .map(|(pa, qa)| pa * (pa.ln() - qa.max(KL_FLOOR).ln()))
        .sum())
}
