//! The dialogue manager: turn state, the infer-then-decide step, and
//! per-turn explanations.
//!
//! Each turn the manager infers the disease posterior from everything known
//! so far. If the most likely disease reaches the confidence threshold, or
//! the turn limit is hit, it diagnoses. Otherwise it asks about the unknown
//! symptom picked from the gated inquiry scores.
//!
//! The policy is piecewise: on diagnosis turns it is the posterior itself,
//! on inquiry turns the masked symptom scores. The stop decision is a rule,
//! not a sample.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{argmax, infer, BayesParams, DiseasePosterior, DiseaseSymptomGraph, Evidence};
use crate::data::{sample_categorical, Catalog};
use crate::diffcore::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::inquiry::{switch, symptom_scores, InquiryMatrices};
use crate::nn::Mlp;
use crate::params::{Binder, ParamKey, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum SymptomValue {
    Positive,
    Negative,
    Unknown,
}

impl SymptomValue {
    pub fn as_real(self) -> f64 {
        i8::from(self) as f64
    }
}

impl From<SymptomValue> for i8 {
    fn from(v: SymptomValue) -> i8 {
        match v {
            SymptomValue::Positive => 1,
            SymptomValue::Negative => -1,
            SymptomValue::Unknown => 0,
        }
    }
}

impl TryFrom<i8> for SymptomValue {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(SymptomValue::Positive),
            -1 => Ok(SymptomValue::Negative),
            0 => Ok(SymptomValue::Unknown),
            other => Err(format!("symptom value must be 1, -1 or 0, got {other}")),
        }
    }
}

impl From<bool> for SymptomValue {
    fn from(b: bool) -> Self {
        if b {
            SymptomValue::Positive
        } else {
            SymptomValue::Negative
        }
    }
}

/// Evidence vector over all symptoms plus the 1-based turn counter.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymptomState {
    pub values: Vec<SymptomValue>,
    pub turn: u32,
}

impl SymptomState {
    pub fn unknown(num_symptoms: usize) -> Self {
        Self { values: vec![SymptomValue::Unknown; num_symptoms], turn: 1 }
    }

    /// From raw `1 / -1 / 0` values. Panics on anything else.
    pub fn from_values(values: Vec<i8>, turn: u32) -> Self {
        let values = values.into_iter().map(|v| SymptomValue::try_from(v).unwrap()).collect();
        Self { values, turn }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_reals(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.as_real()).collect()
    }

    pub fn is_known(&self, j: usize) -> bool {
        self.values[j] != SymptomValue::Unknown
    }

    pub fn known_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|j| self.is_known(j)).collect()
    }

    pub fn known_count(&self) -> usize {
        self.values.iter().filter(|v| **v != SymptomValue::Unknown).count()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.values.iter().enumerate().filter(|(_, v)| **v == SymptomValue::Positive).map(|(j, _)| j)
    }

    pub fn evidence(&self) -> Evidence {
        let mut ev = Evidence::default();
        for (j, v) in self.values.iter().enumerate() {
            match v {
                SymptomValue::Positive => {
                    ev.positive.insert(j);
                }
                SymptomValue::Negative => {
                    ev.negative.insert(j);
                }
                SymptomValue::Unknown => {}
            }
        }
        ev
    }
}

/// Records the patient's answer about an unknown symptom and advances the
/// turn.
pub fn apply_answer(state: &SymptomState, symptom: usize, positive: bool) -> Result<SymptomState> {
    match state.values.get(symptom) {
        None => Err(Error::Contract(format!("symptom {symptom} out of range"))),
        Some(SymptomValue::Unknown) => {
            let mut next = state.clone();
            next.values[symptom] = positive.into();
            next.turn += 1;
            Ok(next)
        }
        Some(_) => Err(Error::Contract(format!("symptom {symptom} is already known"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index")]
pub enum Action {
    Query(usize),
    Diagnose(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DialogueConfig {
    /// Diagnose once the top disease reaches this posterior probability.
    pub confidence_threshold: f64,
    /// Turn at which a diagnosis is forced.
    pub max_turns: u32,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        Self { confidence_threshold: 0.85, max_turns: 10 }
    }
}

impl DialogueConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.confidence_threshold > 0.0 && self.confidence_threshold <= 1.0) {
            return Err(Error::Validation("confidence threshold must lie in (0, 1]".into()));
        }
        if self.max_turns < 1 {
            return Err(Error::Validation("max turns must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Stochastic,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Logic {
    /// Conditional-probability matrix dominates (`mu > 0.5`, ties included).
    Ensure,
    /// Mutual-information matrix dominates.
    Distinguish,
}

impl Logic {
    pub fn from_mu(mu: f64) -> Self {
        if mu >= 0.5 {
            Logic::Ensure
        } else {
            Logic::Distinguish
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Confident,
    TurnLimit,
    /// Every symptom is known but confidence is still below threshold.
    Exhausted,
}

/// Everything the manager computed on one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub turn: u32,
    pub posterior: DiseasePosterior,
    pub mu: f64,
    pub logic: Logic,
    /// Masked symptom scores; present on inquiry turns only.
    pub scores: Option<Vec<f64>>,
    /// Per-logic contribution to each symptom's raw score on inquiry turns.
    pub ensure: Option<Vec<f64>>,
    pub distinguish: Option<Vec<f64>>,
    pub action: Action,
    /// Probability the policy assigned to `action`.
    pub action_prob: f64,
    pub stop: Option<StopReason>,
}

/// Trainable part of the manager plus the fixed structures it reads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueModel {
    pub graph: DiseaseSymptomGraph,
    pub bayes: BayesParams,
    pub matrices: InquiryMatrices,
    pub switcher: Mlp,
}

impl DialogueModel {
    pub fn num_diseases(&self) -> usize {
        self.graph.num_diseases
    }

    pub fn num_symptoms(&self) -> usize {
        self.graph.num_symptoms()
    }
}

impl Parameterized for DialogueModel {
    fn get(&self, key: &ParamKey) -> Option<f64> {
        self.bayes.get(key).or_else(|| self.switcher.get(key))
    }

    fn get_mut(&mut self, key: &ParamKey) -> Option<&mut f64> {
        if key.is_bayes() {
            self.bayes.get_mut(key)
        } else {
            self.switcher.get_mut(key)
        }
    }

    fn keys(&self) -> Vec<ParamKey> {
        let mut keys = self.bayes.keys();
        keys.extend(self.switcher.keys());
        keys
    }
}

/// The differentiable record of one turn.
#[derive(Debug, Clone)]
pub struct TurnGraph {
    pub tape: Tape,
    pub binder: Binder,
    pub posterior: Vec<NodeId>,
    pub mu: NodeId,
    /// `ln pi(action | state)`.
    pub log_prob: NodeId,
    /// Entropy of the distribution the action was drawn from.
    pub entropy: NodeId,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub action: Action,
    pub trace: TurnTrace,
    pub graph: TurnGraph,
}

fn choose(probs: &[f64], mode: Mode, rng: &mut impl Rng) -> usize {
    match mode {
        Mode::Greedy => argmax(probs),
        Mode::Stochastic => sample_categorical(probs, rng.gen::<f64>()),
    }
}

/// One decision. `rng` is only drawn from in [`Mode::Stochastic`].
pub fn step(
    state: &SymptomState,
    model: &DialogueModel,
    config: &DialogueConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Step> {
    decide(state, model, config, |_, probs| Ok(choose(probs, mode, rng)))
}

/// Rebuilds the turn that took `action` in `state`, e.g. to re-evaluate
/// `ln pi` under different parameters. Fails if the stop rule now calls for
/// the other kind of action.
pub fn replay(state: &SymptomState, model: &DialogueModel, config: &DialogueConfig, action: Action) -> Result<Step> {
    decide(state, model, config, |diagnose, _| match (diagnose, action) {
        (true, Action::Diagnose(i)) | (false, Action::Query(i)) => Ok(i),
        _ => Err(Error::Contract(format!("{action:?} is not available under the current stop rule"))),
    })
}

fn decide(
    state: &SymptomState,
    model: &DialogueModel,
    config: &DialogueConfig,
    pick: impl FnOnce(bool, &[f64]) -> Result<usize>,
) -> Result<Step> {
    if state.len() != model.num_symptoms() {
        return Err(Error::Validation(format!(
            "state has {} symptoms, model expects {}",
            state.len(),
            model.num_symptoms()
        )));
    }
    if state.turn == 1 && state.known_count() == 0 {
        return Err(Error::Contract("the first turn needs at least one known symptom".into()));
    }
    let mut tape = Tape::new();
    let mut binder = Binder::new();
    let posterior = infer(&model.bayes, &model.graph, &state.evidence(), &mut tape, &mut binder)?;
    let probs = tape.values(&posterior);
    let post = DiseasePosterior { probs };
    let mu = switch(&model.switcher, state, &posterior, &mut tape, &mut binder)?;
    let mu_v = tape.value(mu);

    let stop = if post.max() >= config.confidence_threshold {
        Some(StopReason::Confident)
    } else if state.turn >= config.max_turns {
        Some(StopReason::TurnLimit)
    } else if state.known_count() == state.len() {
        Some(StopReason::Exhausted)
    } else {
        None
    };

    let (action, dist, scores, ensure, distinguish) = match stop {
        Some(_) => {
            let d = pick(true, &post.probs)?;
            (Action::Diagnose(d), posterior.clone(), None, None, None)
        }
        None => {
            let s = symptom_scores(&posterior, &model.matrices, mu, &state.known_mask(), &mut tape)?;
            let values = tape.values(&s.probs);
            let j = pick(false, &values)?;
            (Action::Query(j), s.probs, Some(values), Some(s.ensure), Some(s.distinguish))
        }
    };
    let chosen = match action {
        Action::Diagnose(d) => dist[d],
        Action::Query(j) => dist[j],
    };
    let log_prob = tape.log(chosen)?;
    let entropy = tape.entropy(&dist)?;
    let trace = TurnTrace {
        turn: state.turn,
        posterior: post,
        mu: mu_v,
        logic: Logic::from_mu(mu_v),
        scores,
        ensure,
        distinguish,
        action,
        action_prob: tape.value(chosen),
        stop,
    };
    Ok(Step { action, trace, graph: TurnGraph { tape, binder, posterior, mu, log_prob, entropy } })
}

/// Human-readable account of one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub turn: u32,
    /// Most probable diseases first.
    pub top_diseases: Vec<RankedDisease>,
    /// Full posterior in catalog order.
    pub posterior: Vec<f64>,
    pub mu: f64,
    pub logic: Logic,
    pub logic_label: String,
    pub action: ActionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDisease {
    pub disease: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionView {
    Query {
        symptom: String,
        index: usize,
        score: f64,
        /// Share of the raw score from the conditional matrix.
        ensure_contribution: f64,
        /// Share of the raw score from the mutual-information matrix.
        distinguish_contribution: f64,
        /// Diseases linked to the symptom in the network.
        connected_diseases: Vec<String>,
    },
    Diagnose {
        disease: String,
        index: usize,
        confidence: f64,
        stop: Option<StopReason>,
    },
}

pub const EXPLAIN_TOP_K: usize = 3;

pub fn explain(trace: &TurnTrace, catalog: &Catalog, graph: &DiseaseSymptomGraph) -> Explanation {
    let top_diseases = trace
        .posterior
        .top_k(EXPLAIN_TOP_K)
        .into_iter()
        .map(|(d, p)| RankedDisease { disease: catalog.diseases[d].clone(), probability: p })
        .collect();
    let action = match trace.action {
        Action::Query(j) => ActionView::Query {
            symptom: catalog.symptoms[j].clone(),
            index: j,
            score: trace.scores.as_ref().map_or(0.0, |s| s[j]),
            ensure_contribution: trace.ensure.as_ref().map_or(0.0, |s| s[j]),
            distinguish_contribution: trace.distinguish.as_ref().map_or(0.0, |s| s[j]),
            connected_diseases: graph.parents[j].iter().map(|&d| catalog.diseases[d].clone()).collect(),
        },
        Action::Diagnose(d) => ActionView::Diagnose {
            disease: catalog.diseases[d].clone(),
            index: d,
            confidence: trace.posterior.probs[d],
            stop: trace.stop,
        },
    };
    let logic_label = match trace.logic {
        Logic::Ensure => "Ensure (conditional probability)",
        Logic::Distinguish => "Distinguish (mutual information)",
    };
    Explanation {
        turn: trace.turn,
        top_diseases,
        posterior: trace.posterior.probs.clone(),
        mu: trace.mu,
        logic: trace.logic,
        logic_label: logic_label.to_string(),
        action,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::logit;
    use crate::params::Net;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two diseases, three symptoms. Symptom 0 strongly indicates disease 0.
    fn model() -> DialogueModel {
        let graph = DiseaseSymptomGraph { parents: vec![vec![0, 1]; 3], edge_threshold: 0, num_diseases: 2 };
        let cpt = |a: f64, b: f64| vec![0.0, logit(a), logit(b), 0.0];
        DialogueModel {
            bayes: BayesParams {
                prior_logits: vec![0.0, 0.0],
                cpt_logits: vec![cpt(0.97, 0.03), cpt(0.5, 0.55), cpt(0.3, 0.8)],
            },
            graph,
            matrices: InquiryMatrices {
                cond: vec![vec![0.5, 0.2, 0.3], vec![0.1, 0.3, 0.6]],
                mutual: vec![vec![0.6, 0.1, 0.3], vec![0.6, 0.1, 0.3]],
            },
            switcher: Mlp::zeros(Net::Switcher, 5, 4),
        }
    }

    #[test]
    fn confident_posterior_diagnoses() {
        let state = SymptomState::from_values(vec![1, 0, 0], 1);
        let cfg = DialogueConfig { confidence_threshold: 0.9, max_turns: 10 };
        let s = step(&state, &model(), &cfg, Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!((s.trace.posterior.probs[0] - 0.97).abs() < 1e-12);
        assert_eq!(s.action, Action::Diagnose(0));
        assert_eq!(s.trace.stop, Some(StopReason::Confident));
    }

    #[test]
    fn unsure_posterior_queries_argmax_score() {
        // symptom 1 positive: posterior ~ (0.476, 0.524)
        let state = SymptomState::from_values(vec![0, 1, 0], 1);
        let cfg = DialogueConfig { confidence_threshold: 0.9, max_turns: 10 };
        let s = step(&state, &model(), &cfg, Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let scores = s.trace.scores.clone().unwrap();
        assert_eq!(scores[1], 0.0);
        let best = if scores[0] >= scores[2] { 0 } else { 2 };
        assert_eq!(s.action, Action::Query(best));
        assert_eq!(s.trace.mu, 0.5);
        assert_eq!(s.trace.logic, Logic::Ensure);
    }

    #[test]
    fn turn_limit_forces_diagnosis() {
        let state = SymptomState::from_values(vec![0, 1, 0], 3);
        let cfg = DialogueConfig { confidence_threshold: 0.99, max_turns: 3 };
        let s = step(&state, &model(), &cfg, Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(matches!(s.action, Action::Diagnose(_)));
        assert_eq!(s.trace.stop, Some(StopReason::TurnLimit));
    }

    #[test]
    fn exhausted_state_forces_diagnosis() {
        let state = SymptomState::from_values(vec![-1, 1, -1], 2);
        let cfg = DialogueConfig { confidence_threshold: 0.999, max_turns: 10 };
        let s = step(&state, &model(), &cfg, Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(s.trace.stop, Some(StopReason::Exhausted));
    }

    #[test]
    fn empty_first_turn_is_rejected() {
        let state = SymptomState::unknown(3);
        let r = step(&state, &model(), &DialogueConfig::default(), Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn stochastic_steps_repeat_with_seed() {
        let state = SymptomState::from_values(vec![0, 1, 0], 1);
        let cfg = DialogueConfig { confidence_threshold: 0.9, max_turns: 10 };
        let run = |seed| step(&state, &model(), &cfg, Mode::Stochastic, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().action;
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn log_prob_matches_trace() {
        let state = SymptomState::from_values(vec![0, 1, 0], 1);
        let s = step(&state, &model(), &DialogueConfig::default(), Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let lp = s.graph.tape.value(s.graph.log_prob);
        assert!((lp - s.trace.action_prob.ln()).abs() < 1e-12);
    }

    #[test]
    fn answers_update_state() {
        let s = SymptomState::from_values(vec![0, 0, 0, 0], 2);
        let s2 = apply_answer(&s, 3, true).unwrap();
        assert_eq!(s2.values[3], SymptomValue::Positive);
        assert_eq!(s2.turn, 3);
        assert!(matches!(apply_answer(&s2, 3, false), Err(Error::Contract(_))));
        assert!(apply_answer(&s2, 9, false).is_err());
    }

    #[test]
    fn logic_labels() {
        assert_eq!(Logic::from_mu(0.7), Logic::Ensure);
        assert_eq!(Logic::from_mu(0.3), Logic::Distinguish);
        assert_eq!(Logic::from_mu(0.5), Logic::Ensure);
    }

    #[test]
    fn explanation_of_query_turn() {
        let cat = Catalog::new(vec!["flu".into(), "cold".into()], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let m = model();
        let state = SymptomState::from_values(vec![0, 1, 0], 1);
        let s = step(&state, &m, &DialogueConfig::default(), Mode::Greedy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let e = explain(&s.trace, &cat, &m.graph);
        assert_eq!(e.top_diseases[0].disease, "cold");
        assert!((e.posterior.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        match e.action {
            ActionView::Query { ensure_contribution, distinguish_contribution, score, .. } => {
                assert!(ensure_contribution > 0.0 && distinguish_contribution > 0.0 && score > 0.0);
            }
            other => panic!("expected query, got {other:?}"),
        }
    }

    #[test]
    fn symptom_value_serializes_as_integer() {
        let s = SymptomState::from_values(vec![1, -1, 0], 2);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"values":[1,-1,0],"turn":2}"#);
        assert_eq!(serde_json::from_str::<SymptomState>(&json).unwrap(), s);
        assert!(serde_json::from_str::<SymptomState>(r#"{"values":[2],"turn":1}"#).is_err());
    }

    #[test]
    fn replay_reproduces_the_chosen_turn() {
        let m = model();
        let state = SymptomState::from_values(vec![0, 1, 0], 1);
        let cfg = DialogueConfig::default();
        let s = step(&state, &m, &cfg, Mode::Stochastic, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let r = replay(&state, &m, &cfg, s.action).unwrap();
        assert_eq!(r.trace, s.trace);
        assert_eq!(r.graph.tape.value(r.graph.log_prob), s.graph.tape.value(s.graph.log_prob));
        assert!(replay(&state, &m, &cfg, Action::Diagnose(0)).is_err());
    }
}
