//! Interpretable dialogue manager for symptom-inquiry medical diagnosis.
//!
//! Each turn a differentiable Bayesian network turns the symptoms known so
//! far into a disease posterior. If no disease is confident enough, the next
//! question is chosen from two row-normalized matrices, conditional
//! probability ("ensure") and mutual information ("distinguish"), blended by
//! a learned gate. Network logits, gate and critic are trained together with
//! advantage actor-critic against a simulated patient.
//!
//! Module map:
//!
//! - [`diffcore`]: scalar reverse-mode autodiff tape
//! - [`data`]: dataset schema, co-occurrence counts, synthetic patients
//! - [`bayesnet`]: graph, CPT parameters, exact inference and its oracle
//! - [`inquiry`]: inquiry matrices, switcher and symptom scores
//! - [`dialogue`]: turn state, the decision step, explanations
//! - [`simulator`]: patient simulator and rewards
//! - [`training`]: A2C updates and the training loop
//! - [`eval`]: metrics and diagnosis reports
//! - [`checkpoint`]: versioned model documents

pub mod bayesnet;
pub mod checkpoint;
pub mod data;
pub mod dialogue;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod inquiry;
pub mod nn;
pub mod params;
pub mod simulator;
pub mod training;

pub use error::{Error, Result};
