//! Two-layer perceptron with hand-derived backpropagation.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Self::Tanh => v.tanh(),
            Self::Identity => v,
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - a * a,
            Self::Identity => 1.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Self::Tanh => 0,
            Self::Identity => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Self::Tanh),
            1 => Some(Self::Identity),
            _ => None,
        }
    }
}

/// `y = W2 act(W1 x + b1) + b2`, weights row-major (`out x in`).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub activation: Activation,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    hidden: Vec<f64>,
}

impl Mlp {
    pub fn zeros(input: usize, hidden: usize, output: usize, activation: Activation) -> Self {
        Self {
            input,
            hidden,
            output,
            activation,
            w1: vec![0.0; hidden * input],
            b1: vec![0.0; hidden],
            w2: vec![0.0; output * hidden],
            b2: vec![0.0; output],
        }
    }

    /// Glorot-normal weights, zero biases.
    pub fn random<R: Rng>(input: usize, hidden: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let mut m = Self::zeros(input, hidden, output, activation);
        let n1 = Normal::new(0.0, (2.0 / (input + hidden) as f64).sqrt()).expect("finite sd");
        let n2 = Normal::new(0.0, (2.0 / (hidden + output) as f64).sqrt()).expect("finite sd");
        m.w1.iter_mut().for_each(|w| *w = n1.sample(rng));
        m.w2.iter_mut().for_each(|w| *w = n2.sample(rng));
        m
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input, self.hidden, self.output, self.activation)
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn tensors(&self) -> [(&[f64], Vec<usize>); 4] {
        [
            (&self.w1, vec![self.hidden, self.input]),
            (&self.b1, vec![self.hidden]),
            (&self.w2, vec![self.output, self.hidden]),
            (&self.b2, vec![self.output]),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        debug_assert_eq!(x.len(), self.input);
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.input..(h + 1) * self.input];
                let pre = self.b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                self.activation.apply(pre)
            })
            .collect();
        let out = (0..self.output)
            .map(|o| {
                let row = &self.w2[o * self.hidden..(o + 1) * self.hidden];
                self.b2[o] + row.iter().zip(&hidden).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        (
            out,
            MlpCache {
                input: x.to_vec(),
                hidden,
            },
        )
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Accumulates parameter gradients into `grads` and returns `dL/dx`.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut d_hidden = vec![0.0; self.hidden];
        for (o, &g) in d_out.iter().enumerate() {
            grads.b2[o] += g;
            let row = o * self.hidden;
            for h in 0..self.hidden {
                grads.w2[row + h] += g * cache.hidden[h];
                d_hidden[h] += g * self.w2[row + h];
            }
        }
        let mut d_in = vec![0.0; self.input];
        for h in 0..self.hidden {
            let g = d_hidden[h] * self.activation.derivative_from_output(cache.hidden[h]);
            grads.b1[h] += g;
            let row = h * self.input;
            for i in 0..self.input {
                grads.w1[row + i] += g * cache.input[i];
                d_in[i] += g * self.w1[row + i];
            }
        }
        d_in
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(t, _)| t.iter().all(|v| v.is_finite()))
    }
}
