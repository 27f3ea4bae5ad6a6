//! Addressing trainable scalars across the model.
//!
//! Every trainable value has a [`ParamKey`]. During a forward pass a
//! [`Binder`] places each parameter on the tape at most once and remembers
//! its node, so after `backward` the gradient of every parameter that was
//! actually used can be read back as a [`GradMap`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::diffcore::{Gradients, NodeId, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Net {
    Switcher,
    Critic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ParamKey {
    /// Logit of the prior of one disease.
    Prior(usize),
    /// Logit of `P(symptom | parent configuration)`; `config` is a bitmask
    /// over the symptom's ordered parent list.
    Cpt { symptom: usize, config: u32 },
    /// Flat index into layer `layer` of an MLP: weights first, then biases.
    Mlp { net: Net, layer: usize, index: usize },
}

impl ParamKey {
    pub fn is_bayes(&self) -> bool {
        matches!(self, ParamKey::Prior(_) | ParamKey::Cpt { .. })
    }

    pub fn net(&self) -> Option<Net> {
        match self {
            ParamKey::Mlp { net, .. } => Some(*net),
            _ => None,
        }
    }
}

pub type GradMap = BTreeMap<ParamKey, f64>;

/// Adds `scale * src` into `dst`.
pub fn accumulate(dst: &mut GradMap, src: &GradMap, scale: f64) {
    for (k, g) in src {
        *dst.entry(*k).or_insert(0.0) += scale * g;
    }
}

#[derive(Debug, Default, Clone)]
pub struct Binder {
    nodes: BTreeMap<ParamKey, NodeId>,
}

impl Binder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, tape: &mut Tape, key: ParamKey, value: f64) -> NodeId {
        *self.nodes.entry(key).or_insert_with(|| tape.leaf(value))
    }

    pub fn node(&self, key: &ParamKey) -> Option<NodeId> {
        self.nodes.get(key).copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = &ParamKey> {
        self.nodes.keys()
    }

    /// Gradient of every bound parameter, including zeros.
    pub fn gradients(&self, grads: &Gradients) -> GradMap {
        self.nodes.iter().map(|(k, &n)| (*k, grads.get(n))).collect()
    }
}

/// Uniform read/write access to parameters by key.
pub trait Parameterized {
    fn get(&self, key: &ParamKey) -> Option<f64>;
    fn get_mut(&mut self, key: &ParamKey) -> Option<&mut f64>;
    /// Every key this object owns, in a stable order.
    fn keys(&self) -> Vec<ParamKey>;
}

/// `params += step * grads`; keys the object does not own are ignored and
/// returned.
pub fn apply_step<P: Parameterized + ?Sized>(params: &mut P, grads: &GradMap, step: f64) -> Vec<ParamKey> {
    let mut foreign = Vec::new();
    for (k, g) in grads {
        match params.get_mut(k) {
            Some(v) => *v += step * g,
            None => foreign.push(*k),
        }
    }
    foreign
}
