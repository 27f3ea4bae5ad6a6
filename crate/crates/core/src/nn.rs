//! One-hidden-layer perceptrons for the logic switcher and the critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{NodeId, Tape};
use crate::params::{Binder, Net, ParamKey, Parameterized};

/// Fully connected layer, weights stored row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    /// Uniform in `±1/sqrt(inputs)`, zero bias.
    pub fn random(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-bound..bound)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn slot(&self, index: usize) -> Option<&f64> {
        if index < self.weights.len() {
            self.weights.get(index)
        } else {
            self.bias.get(index - self.weights.len())
        }
    }

    fn slot_mut(&mut self, index: usize) -> Option<&mut f64> {
        let nw = self.weights.len();
        if index < nw {
            self.weights.get_mut(index)
        } else {
            self.bias.get_mut(index - nw)
        }
    }
}

/// `input -> tanh(hidden) -> linear scalar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub net: Net,
    pub hidden: Dense,
    pub output: Dense,
}

impl Mlp {
    /// Random hidden layer, zero output layer: the initial output is exactly
    /// zero while gradients still reach every output weight.
    pub fn new(net: Net, inputs: usize, width: usize, rng: &mut impl Rng) -> Self {
        Self { net, hidden: Dense::random(inputs, width, rng), output: Dense::zeros(width, 1) }
    }

    pub fn zeros(net: Net, inputs: usize, width: usize) -> Self {
        Self { net, hidden: Dense::zeros(inputs, width), output: Dense::zeros(width, 1) }
    }

    pub fn input_len(&self) -> usize {
        self.hidden.inputs
    }

    fn layer(&self, layer: usize) -> Option<&Dense> {
        match layer {
            0 => Some(&self.hidden),
            1 => Some(&self.output),
            _ => None,
        }
    }

    fn layer_mut(&mut self, layer: usize) -> Option<&mut Dense> {
        match layer {
            0 => Some(&mut self.hidden),
            1 => Some(&mut self.output),
            _ => None,
        }
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.hidden.inputs, "mlp input length");
        let h: Vec<f64> = (0..self.hidden.outputs)
            .map(|o| {
                let row = &self.hidden.weights[o * self.hidden.inputs..(o + 1) * self.hidden.inputs];
                (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.hidden.bias[o]).tanh()
            })
            .collect();
        self.output.weights.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>() + self.output.bias[0]
    }

    /// Same function built on the tape. Zero-valued leaf inputs are treated
    /// as constants and skipped; they contribute nothing to the value or to
    /// any weight gradient.
    pub fn forward_tape(&self, tape: &mut Tape, binder: &mut Binder, x: &[NodeId]) -> NodeId {
        assert_eq!(x.len(), self.hidden.inputs, "mlp input length");
        let key = |layer, index| ParamKey::Mlp { net: self.net, layer, index };
        let mut hidden = Vec::with_capacity(self.hidden.outputs);
        for o in 0..self.hidden.outputs {
            let mut terms = Vec::with_capacity(x.len() + 1);
            for (i, &xi) in x.iter().enumerate() {
                if tape.value(xi) == 0.0 && tape.node(xi).inputs.is_empty() {
                    continue;
                }
                let idx = o * self.hidden.inputs + i;
                let w = binder.bind(tape, key(0, idx), self.hidden.weights[idx]);
                terms.push(tape.mul(w, xi));
            }
            let b = binder.bind(tape, key(0, self.hidden.weights.len() + o), self.hidden.bias[o]);
            terms.push(b);
            let pre = tape.sum(&terms);
            hidden.push(tape.tanh(pre));
        }
        let mut terms = Vec::with_capacity(hidden.len() + 1);
        for (i, &h) in hidden.iter().enumerate() {
            let w = binder.bind(tape, key(1, i), self.output.weights[i]);
            terms.push(tape.mul(w, h));
        }
        terms.push(binder.bind(tape, key(1, self.output.weights.len()), self.output.bias[0]));
        tape.sum(&terms)
    }
}

impl Parameterized for Mlp {
    fn get(&self, key: &ParamKey) -> Option<f64> {
        match *key {
            ParamKey::Mlp { net, layer, index } if net == self.net => self.layer(layer)?.slot(index).copied(),
            _ => None,
        }
    }

    fn get_mut(&mut self, key: &ParamKey) -> Option<&mut f64> {
        match *key {
            ParamKey::Mlp { net, layer, index } if net == self.net => self.layer_mut(layer)?.slot_mut(index),
            _ => None,
        }
    }

    fn keys(&self) -> Vec<ParamKey> {
        let net = self.net;
        (0..self.hidden.len())
            .map(|index| ParamKey::Mlp { net, layer: 0, index })
            .chain((0..self.output.len()).map(|index| ParamKey::Mlp { net, layer: 1, index }))
            .collect()
    }
}
