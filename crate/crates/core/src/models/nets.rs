//! Feedforward networks on the tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Elu,
}

/// Weights and biases of one bound network; `w` is `in x out`, `b` is
/// `1 x out`.
#[derive(Clone, Debug)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
    pub activation: Activation,
}

impl MlpVars {
    /// Hidden layers use the activation, the output layer is linear.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w);
            let z = g.add_row(z, b);
            h = if i == last {
                z
            } else {
                match self.activation {
                    Activation::Tanh => g.tanh(z),
                    Activation::Elu => g.elu(z),
                }
            };
        }
        h
    }
}

/// Glorot-uniform weights and zero biases for widths `[in, h₁, …, out]`.
pub fn glorot_layers<R: Rng>(widths: &[usize], rng: &mut R) -> Vec<(Tensor, Tensor)> {
    widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = Tensor::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit));
            (weights, Tensor::zeros(1, fan_out))
        })
        .collect()
}
