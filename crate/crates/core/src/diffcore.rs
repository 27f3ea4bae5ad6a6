//! Scalar reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive as a [`Node`] holding its value, the
//! ids of its inputs and the local partial derivative with respect to each
//! input. Because a node can only reference nodes that already exist, the
//! append order is a valid topological order and [`Tape::backward`] is a
//! single reverse sweep.
//!
//! ```
//! use bayes_inquiry::diffcore::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(2.0);
//! let y = tape.leaf(5.0);
//! let z = tape.mul(x, y);
//! let grads = tape.backward(z).unwrap();
//! assert_eq!(grads[x], 5.0);
//! assert_eq!(grads[y], 2.0);
//! ```
//!
//! `backward` never mutates the tape: it returns a fresh [`Gradients`]
//! buffer, so calling it twice on the same root yields identical results.

use std::ops::Index;

use thiserror::Error;

/// Index of a node on its tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Log,
    Exp,
    Sigmoid,
    Tanh,
    Max,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("log of non-positive value {0}")]
    LogDomain(f64),
    #[error("division by zero")]
    DivByZero,
    #[error("node {0} is not on this tape")]
    InvalidNode(usize),
    #[error("non-finite value produced by {op:?}")]
    NonFinite { op: Op },
}

#[derive(Debug, Clone)]
pub struct Node {
    pub value: f64,
    pub op: Op,
    pub inputs: Vec<NodeId>,
    pub partials: Vec<f64>,
}

/// Append-only computation record.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value
    }

    pub fn values(&self, ids: &[NodeId]) -> Vec<f64> {
        ids.iter().map(|&id| self.value(id)).collect()
    }

    fn push(&mut self, value: f64, op: Op, inputs: Vec<NodeId>, partials: Vec<f64>) -> NodeId {
        debug_assert!(inputs.iter().all(|i| i.0 < self.nodes.len()));
        self.nodes.push(Node { value, op, inputs, partials });
        NodeId(self.nodes.len() - 1)
    }

    /// Input or parameter. Constants are leaves whose gradient nobody reads.
    pub fn leaf(&mut self, value: f64) -> NodeId {
        self.push(value, Op::Leaf, Vec::new(), Vec::new())
    }

    pub fn constant(&mut self, value: f64) -> NodeId {
        self.leaf(value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add, vec![a, b], vec![1.0, 1.0])
    }

    /// N-ary addition; an empty slice sums to a zero constant.
    pub fn sum(&mut self, terms: &[NodeId]) -> NodeId {
        if terms.is_empty() {
            return self.constant(0.0);
        }
        let v = terms.iter().map(|&t| self.value(t)).sum();
        self.push(v, Op::Add, terms.to_vec(), vec![1.0; terms.len()])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub, vec![a, b], vec![1.0, -1.0])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        self.push(va * vb, Op::Mul, vec![a, b], vec![vb, va])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let c = self.constant(factor);
        self.mul(a, c)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let (va, vb) = (self.value(a), self.value(b));
        if vb == 0.0 {
            return Err(DiffError::DivByZero);
        }
        Ok(self.push(va / vb, Op::Div, vec![a, b], vec![1.0 / vb, -va / (vb * vb)]))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let v = -self.value(a);
        self.push(v, Op::Neg, vec![a], vec![-1.0])
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        let va = self.value(a);
        if va <= 0.0 || va.is_nan() {
            return Err(DiffError::LogDomain(va));
        }
        Ok(self.push(va.ln(), Op::Log, vec![a], vec![1.0 / va]))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        let v = self.value(a).exp();
        if !v.is_finite() {
            return Err(DiffError::NonFinite { op: Op::Exp });
        }
        Ok(self.push(v, Op::Exp, vec![a], vec![v]))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let s = sigmoid(self.value(a));
        self.push(s, Op::Sigmoid, vec![a], vec![s * (1.0 - s)])
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let t = self.value(a).tanh();
        self.push(t, Op::Tanh, vec![a], vec![1.0 - t * t])
    }

    /// Binary max. On ties the gradient goes to the first argument.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        if va >= vb {
            self.push(va, Op::Max, vec![a, b], vec![1.0, 0.0])
        } else {
            self.push(vb, Op::Max, vec![a, b], vec![0.0, 1.0])
        }
    }

    /// `log(sigmoid(x))` composed from primitives. Never hits the log domain
    /// error for |x| below ~700.
    pub fn log_sigmoid(&mut self, a: NodeId) -> Result<NodeId, DiffError> {
        let s = self.sigmoid(a);
        self.log(s)
    }

    /// Dot product of two equally long node slices.
    pub fn dot(&mut self, a: &[NodeId], b: &[NodeId]) -> NodeId {
        assert_eq!(a.len(), b.len(), "dot: length mismatch");
        let terms: Vec<NodeId> = a.iter().zip(b).map(|(&x, &y)| self.mul(x, y)).collect();
        self.sum(&terms)
    }

    /// Numerically stable softmax of log-weights: subtracts the running max,
    /// exponentiates and normalizes.
    pub fn softmax(&mut self, logits: &[NodeId]) -> Result<Vec<NodeId>, DiffError> {
        let Some((&first, rest)) = logits.split_first() else {
            return Ok(Vec::new());
        };
        let mut top = first;
        for &l in rest {
            top = self.max(top, l);
        }
        let mut exps = Vec::with_capacity(logits.len());
        for &l in logits {
            let shifted = self.sub(l, top);
            exps.push(self.exp(shifted)?);
        }
        let total = self.sum(&exps);
        exps.iter().map(|&e| self.div(e, total)).collect()
    }

    /// Shannon entropy `-Σ p ln p` over the given probabilities. Exact zeros
    /// contribute nothing.
    pub fn entropy(&mut self, probs: &[NodeId]) -> Result<NodeId, DiffError> {
        let mut terms = Vec::with_capacity(probs.len());
        for &p in probs {
            if self.value(p) > 0.0 {
                let lp = self.log(p)?;
                terms.push(self.mul(p, lp));
            }
        }
        let s = self.sum(&terms);
        Ok(self.neg(s))
    }

    /// Reverse accumulation from `root`. Contributions along multiple paths
    /// are summed.
    pub fn backward(&self, root: NodeId) -> Result<Gradients, DiffError> {
        if root.0 >= self.nodes.len() {
            return Err(DiffError::InvalidNode(root.0));
        }
        let mut grads = vec![0.0; root.0 + 1];
        grads[root.0] = 1.0;
        for i in (0..=root.0).rev() {
            let g = grads[i];
            if g == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            for (input, partial) in node.inputs.iter().zip(&node.partials) {
                grads[input.0] += g * partial;
            }
        }
        grads.resize(self.nodes.len(), 0.0);
        Ok(Gradients { grads })
    }
}

/// Gradient of one root with respect to every node on the tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<f64>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> f64 {
        self.grads.get(id.0).copied().unwrap_or(0.0)
    }
}

impl Index<NodeId> for Gradients {
    type Output = f64;

    fn index(&self, id: NodeId) -> &f64 {
        &self.grads[id.0]
    }
}

/// Overflow-safe logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
