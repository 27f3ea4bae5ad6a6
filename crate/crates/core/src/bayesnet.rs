//! Disease inference over a bipartite disease → symptom network.
//!
//! Edges come from thresholded co-occurrence counts. Every symptom carries a
//! conditional probability table over configurations of its parent diseases,
//! stored as logits so gradient steps can never leave `(0, 1)`.
//!
//! A patient has exactly one disease, so [`infer`] scores the `M` one-hot
//! hypotheses only. For hypothesis `d` the CPT entry of symptom `j` is the one
//! with `d` as the single present parent, or the all-absent configuration
//! when `d` is not a parent of `j`. Unobserved symptoms are leaves and sum out
//! to one, so only observed symptoms enter the product. Everything is built
//! on the tape in log space and normalized with a max-shifted softmax.
//!
//! [`brute_force_posterior`] recomputes the same posterior by enumerating
//! every assignment of the unobserved symptoms. It is the test oracle.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::CooccurrenceCounts;
use crate::diffcore::{logit, sigmoid, NodeId, Tape};
use crate::error::{Error, Result};
use crate::params::{Binder, GradMap, ParamKey, Parameterized};

/// Largest parent set whose CPT we will allocate densely.
pub const MAX_PARENTS: usize = 20;
/// Probabilities are clamped into `[CLAMP, 1 - CLAMP]` before taking logits.
pub const CLAMP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiseaseSymptomGraph {
    /// `parents[j]`: sorted disease indices with an edge into symptom `j`.
    pub parents: Vec<Vec<usize>>,
    pub edge_threshold: u64,
    pub num_diseases: usize,
}

impl DiseaseSymptomGraph {
    pub fn num_symptoms(&self) -> usize {
        self.parents.len()
    }

    /// Bit of `disease` within the CPT index of `symptom`, if it is a parent.
    pub fn parent_bit(&self, symptom: usize, disease: usize) -> Option<u32> {
        self.parents[symptom].binary_search(&disease).ok().map(|k| 1u32 << k)
    }

    /// CPT configuration used when `disease` is the patient's only disease.
    pub fn one_hot_config(&self, symptom: usize, disease: usize) -> u32 {
        self.parent_bit(symptom, disease).unwrap_or(0)
    }

    pub fn is_connected(&self, symptom: usize, disease: usize) -> bool {
        self.parent_bit(symptom, disease).is_some()
    }

    /// Symptoms with no parent carry no diagnostic signal.
    pub fn orphan_symptoms(&self) -> Vec<usize> {
        (0..self.parents.len()).filter(|&j| self.parents[j].is_empty()).collect()
    }
}

/// Edge `i -> j` exists iff `n_ds[i][j] > edge_threshold`.
pub fn build_graph(counts: &CooccurrenceCounts, edge_threshold: u64) -> DiseaseSymptomGraph {
    let (m, n) = (counts.num_diseases(), counts.num_symptoms());
    let parents = (0..n)
        .map(|j| (0..m).filter(|&i| counts.n_ds[i][j] > edge_threshold).collect())
        .collect();
    DiseaseSymptomGraph { parents, edge_threshold, num_diseases: m }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesParams {
    pub prior_logits: Vec<f64>,
    /// `cpt_logits[j][config]`, `2^|parents(j)|` entries per symptom.
    pub cpt_logits: Vec<Vec<f64>>,
}

impl BayesParams {
    pub fn prior(&self, d: usize) -> f64 {
        sigmoid(self.prior_logits[d])
    }

    pub fn cpt(&self, symptom: usize, config: u32) -> f64 {
        sigmoid(self.cpt_logits[symptom][config as usize])
    }

    pub fn check_shape(&self, graph: &DiseaseSymptomGraph) -> Result<()> {
        if self.prior_logits.len() != graph.num_diseases || self.cpt_logits.len() != graph.num_symptoms() {
            return Err(Error::Validation("bayes parameters do not match graph dimensions".into()));
        }
        for (j, table) in self.cpt_logits.iter().enumerate() {
            if table.len() != 1usize << graph.parents[j].len() {
                return Err(Error::Validation(format!("cpt of symptom {j} has wrong size")));
            }
        }
        Ok(())
    }
}

impl Parameterized for BayesParams {
    fn get(&self, key: &ParamKey) -> Option<f64> {
        match *key {
            ParamKey::Prior(d) => self.prior_logits.get(d).copied(),
            ParamKey::Cpt { symptom, config } => self.cpt_logits.get(symptom)?.get(config as usize).copied(),
            _ => None,
        }
    }

    fn get_mut(&mut self, key: &ParamKey) -> Option<&mut f64> {
        match *key {
            ParamKey::Prior(d) => self.prior_logits.get_mut(d),
            ParamKey::Cpt { symptom, config } => self.cpt_logits.get_mut(symptom)?.get_mut(config as usize),
            _ => None,
        }
    }

    fn keys(&self) -> Vec<ParamKey> {
        let priors = (0..self.prior_logits.len()).map(ParamKey::Prior);
        let cpts = self.cpt_logits.iter().enumerate().flat_map(|(symptom, t)| {
            (0..t.len() as u32).map(move |config| ParamKey::Cpt { symptom, config })
        });
        priors.chain(cpts).collect()
    }
}

fn clamped_logit(p: f64) -> f64 {
    logit(p.clamp(CLAMP, 1.0 - CLAMP))
}

/// Priors from disease prevalence; single-parent CPT entries from
/// `n_ds / n_d`; every other configuration starts at 0.5.
pub fn init_params(counts: &CooccurrenceCounts, graph: &DiseaseSymptomGraph) -> Result<BayesParams> {
    if counts.total == 0 {
        return Err(Error::Initialization("no records to initialize from".into()));
    }
    let prior_logits = counts
        .n_d
        .iter()
        .map(|&nd| clamped_logit(nd as f64 / counts.total as f64))
        .collect();
    let mut cpt_logits = Vec::with_capacity(graph.num_symptoms());
    for (j, parents) in graph.parents.iter().enumerate() {
        if parents.len() > MAX_PARENTS {
            return Err(Error::Initialization(format!(
                "symptom {j} has {} parents (limit {MAX_PARENTS})",
                parents.len()
            )));
        }
        let mut table = vec![0.0; 1 << parents.len()];
        for (k, &d) in parents.iter().enumerate() {
            if counts.n_d[d] == 0 {
                return Err(Error::Initialization(format!(
                    "disease {d} has an edge to symptom {j} but no patients"
                )));
            }
            table[1 << k] = clamped_logit(counts.n_ds[d][j] as f64 / counts.n_d[d] as f64);
        }
        cpt_logits.push(table);
    }
    Ok(BayesParams { prior_logits, cpt_logits })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub positive: BTreeSet<usize>,
    pub negative: BTreeSet<usize>,
}

impl Evidence {
    pub fn new(positive: impl IntoIterator<Item = usize>, negative: impl IntoIterator<Item = usize>) -> Result<Self> {
        let ev = Self { positive: positive.into_iter().collect(), negative: negative.into_iter().collect() };
        if let Some(j) = ev.positive.intersection(&ev.negative).next() {
            return Err(Error::Validation(format!("symptom {j} is both positive and negative")));
        }
        Ok(ev)
    }

    fn check(&self, n: usize) -> Result<()> {
        match self.positive.iter().chain(&self.negative).find(|&&j| j >= n) {
            Some(j) => Err(Error::Validation(format!("evidence symptom {j} out of range"))),
            None => Ok(()),
        }
    }

    pub fn is_observed(&self, j: usize) -> bool {
        self.positive.contains(&j) || self.negative.contains(&j)
    }
}

/// Posterior distribution over diseases, as values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiseasePosterior {
    pub probs: Vec<f64>,
}

impl DiseasePosterior {
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(disease, probability)` pairs, most probable first; ties by index.
    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        let mut order: Vec<usize> = (0..self.probs.len()).collect();
        order.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        order.into_iter().take(k).map(|d| (d, self.probs[d])).collect()
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Exact posterior built on `tape`; returns one node per disease.
pub fn infer(
    params: &BayesParams,
    graph: &DiseaseSymptomGraph,
    evidence: &Evidence,
    tape: &mut Tape,
    binder: &mut Binder,
) -> Result<Vec<NodeId>> {
    evidence.check(graph.num_symptoms())?;
    let m = graph.num_diseases;
    let mut log_scores = Vec::with_capacity(m);
    for d in 0..m {
        let mut terms = Vec::with_capacity(1 + evidence.positive.len() + evidence.negative.len());
        let prior = binder.bind(tape, ParamKey::Prior(d), params.prior_logits[d]);
        terms.push(tape.log_sigmoid(prior)?);
        for (&j, positive) in evidence
            .positive
            .iter()
            .map(|j| (j, true))
            .chain(evidence.negative.iter().map(|j| (j, false)))
        {
            let config = graph.one_hot_config(j, d);
            let theta = binder.bind(
                tape,
                ParamKey::Cpt { symptom: j, config },
                params.cpt_logits[j][config as usize],
            );
            let term = if positive {
                tape.log_sigmoid(theta)?
            } else {
                // log(1 - sigmoid(x)) = log(sigmoid(-x))
                let flipped = tape.neg(theta);
                tape.log_sigmoid(flipped)?
            };
            terms.push(term);
        }
        log_scores.push(tape.sum(&terms));
    }
    Ok(tape.softmax(&log_scores)?)
}

/// Value-only convenience wrapper around [`infer`].
pub fn posterior(params: &BayesParams, graph: &DiseaseSymptomGraph, evidence: &Evidence) -> Result<DiseasePosterior> {
    let mut tape = Tape::new();
    let mut binder = Binder::new();
    let nodes = infer(params, graph, evidence, &mut tape, &mut binder)?;
    Ok(DiseasePosterior { probs: tape.values(&nodes) })
}

/// Gradient of `loss` with respect to every Bayes-net logit bound during
/// inference. A loss that does not depend on the posterior yields zeros.
pub fn posterior_gradients(tape: &Tape, binder: &Binder, loss: NodeId) -> Result<GradMap> {
    let grads = tape.backward(loss)?;
    Ok(binder.gradients(&grads).into_iter().filter(|(k, _)| k.is_bayes()).collect())
}

/// Largest number of diseases or unobserved symptoms the oracle will
/// enumerate.
pub const ENUMERATION_LIMIT: usize = 20;

/// Posterior over the one-hot disease hypotheses by explicit enumeration:
/// for every hypothesis, the joint probability of the evidence is summed over
/// every assignment of every unobserved symptom, in linear space.
pub fn brute_force_posterior(
    params: &BayesParams,
    graph: &DiseaseSymptomGraph,
    evidence: &Evidence,
) -> Result<DiseasePosterior> {
    let m = graph.num_diseases;
    if m > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!("{m} diseases exceeds {ENUMERATION_LIMIT}")));
    }
    evidence.check(graph.num_symptoms())?;
    let unobserved: Vec<usize> = (0..graph.num_symptoms()).filter(|&j| !evidence.is_observed(j)).collect();
    if unobserved.len() > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!("{} unobserved symptoms exceeds {ENUMERATION_LIMIT}", unobserved.len())));
    }
    let joint: Vec<f64> = (0..m)
        .map(|d| {
            let cpt = |j: usize| params.cpt(j, graph.one_hot_config(j, d));
            let mut observed = params.prior(d);
            for &j in &evidence.positive {
                observed *= cpt(j);
            }
            for &j in &evidence.negative {
                observed *= 1.0 - cpt(j);
            }
            let mut marginal = 0.0;
            for assignment in 0u64..(1 << unobserved.len()) {
                let mut p = 1.0;
                for (bit, &j) in unobserved.iter().enumerate() {
                    let q = cpt(j);
                    p *= if assignment >> bit & 1 == 1 { q } else { 1.0 - q };
                }
                marginal += p;
            }
            observed * marginal
        })
        .collect();
    let z: f64 = joint.iter().sum();
    if z <= 0.0 || !z.is_finite() {
        return Err(Error::Numerical("evidence has zero probability under every hypothesis".into()));
    }
    Ok(DiseasePosterior { probs: joint.iter().map(|p| p / z).collect() })
}

/// Per-disease marginals `P(D_i = 1 | evidence)` when diseases are treated
/// as independent Bernoulli variables with `sigmoid(prior_logit)` priors and
/// every CPT configuration is used, by enumeration of all `2^M` disease
/// configurations. Unobserved symptoms sum out exactly as in the one-hot
/// oracle. This is the multi-disease reading of the network, kept for
/// comparison with [`infer`].
pub fn brute_force_marginals(params: &BayesParams, graph: &DiseaseSymptomGraph, evidence: &Evidence) -> Result<Vec<f64>> {
    let m = graph.num_diseases;
    if m > ENUMERATION_LIMIT {
        return Err(Error::TooLarge(format!("{m} diseases exceeds {ENUMERATION_LIMIT}")));
    }
    evidence.check(graph.num_symptoms())?;
    let mut marginals = vec![0.0; m];
    let mut z = 0.0;
    for present in 0u64..(1 << m) {
        let mut p = 1.0;
        for d in 0..m {
            let prior = params.prior(d);
            p *= if present >> d & 1 == 1 { prior } else { 1.0 - prior };
        }
        for (&j, positive) in evidence.positive.iter().map(|j| (j, true)).chain(evidence.negative.iter().map(|j| (j, false))) {
            let config = graph.parents[j]
                .iter()
                .enumerate()
                .filter(|(_, &d)| present >> d & 1 == 1)
                .fold(0u32, |acc, (k, _)| acc | 1 << k);
            let q = params.cpt(j, config);
            p *= if positive { q } else { 1.0 - q };
        }
        z += p;
        for (d, slot) in marginals.iter_mut().enumerate() {
            if present >> d & 1 == 1 {
                *slot += p;
            }
        }
    }
    Ok(marginals.into_iter().map(|x| x / z).collect())
}
