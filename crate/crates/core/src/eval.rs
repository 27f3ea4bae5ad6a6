//! Greedy evaluation metrics and the final diagnosis report.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{brute_force_posterior, BayesParams, DiseaseSymptomGraph, Evidence};
use crate::data::{PatientRecord, SyntheticSpec};
use crate::dialogue::{Action, DialogueConfig, DialogueModel, Mode, SymptomState, TurnTrace};
use crate::diffcore::logit;
use crate::error::{Error, Result};
use crate::simulator::RewardConfig;
use crate::training::run_episode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub accuracy: f64,
    /// Implicit positives revealed by queries over implicit positives,
    /// averaged over episodes that have at least one.
    pub recall: f64,
    /// Variant counting the self-reported positives in both numerator and
    /// denominator.
    pub recall_with_explicit: f64,
    /// Episodes left out of `recall` because the patient had no implicit
    /// positive symptom.
    pub episodes_without_implicit: usize,
    pub mean_turns: f64,
    /// Mean switch weight over every inquiry turn.
    pub mean_mu_per_turn: f64,
    /// Mean of each dialogue's average switch weight, over dialogues with at
    /// least one inquiry turn.
    pub mean_mu_per_dialogue: f64,
    /// `None` for diseases absent from the evaluated records.
    pub per_disease_accuracy: Vec<Option<f64>>,
}

impl fmt::Display for EvalSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes: {}", self.episodes)?;
        writeln!(f, "accuracy: {:.4}", self.accuracy)?;
        writeln!(
            f,
            "recall: {:.4} (excluded {} episodes without implicit symptoms)",
            self.recall, self.episodes_without_implicit
        )?;
        writeln!(f, "recall incl. explicit: {:.4}", self.recall_with_explicit)?;
        writeln!(f, "mean turns: {:.3}", self.mean_turns)?;
        write!(f, "mean mu: {:.4} per turn, {:.4} per dialogue", self.mean_mu_per_turn, self.mean_mu_per_dialogue)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// One greedy consultation per record, in record order.
pub fn evaluate(model: &DialogueModel, records: &[PatientRecord], config: &DialogueConfig) -> Result<EvalSummary> {
    if records.is_empty() {
        return Err(Error::Validation("cannot evaluate on zero records".into()));
    }
    // greedy mode never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let m = model.num_diseases();
    let mut correct = 0usize;
    let mut per_disease = vec![(0usize, 0usize); m];
    let mut recalls = Vec::new();
    let mut recalls_explicit = Vec::new();
    let mut without_implicit = 0;
    let mut turns = Vec::with_capacity(records.len());
    let mut mu_turns = Vec::new();
    let mut mu_dialogues = Vec::new();
    for record in records {
        let ep = run_episode(model, record, config, &RewardConfig::default(), Mode::Greedy, &mut rng)?;
        turns.push(ep.transitions.len() as f64);
        per_disease[record.disease].1 += 1;
        if ep.correct {
            correct += 1;
            per_disease[record.disease].0 += 1;
        }
        match episode_recall(record, ep.queries()) {
            Some(r) => recalls.push(r),
            None => without_implicit += 1,
        }
        let found = ep.queries().filter(|&j| record.is_positive(j)).count();
        let implicit = record.implicit_positives().count();
        let explicit = record.explicit.values().filter(|&&v| v).count();
        if implicit + explicit > 0 {
            recalls_explicit.push((found + explicit) as f64 / (implicit + explicit) as f64);
        }
        let mus: Vec<f64> = ep.traces.iter().filter(|t| t.scores.is_some()).map(|t| t.mu).collect();
        if !mus.is_empty() {
            mu_dialogues.push(mean(&mus));
        }
        mu_turns.extend(mus);
    }
    Ok(EvalSummary {
        episodes: records.len(),
        accuracy: correct as f64 / records.len() as f64,
        recall: mean(&recalls),
        recall_with_explicit: mean(&recalls_explicit),
        episodes_without_implicit: without_implicit,
        mean_turns: mean(&turns),
        mean_mu_per_turn: mean(&mu_turns),
        mean_mu_per_dialogue: mean(&mu_dialogues),
        per_disease_accuracy: per_disease
            .into_iter()
            .map(|(ok, n)| (n > 0).then(|| ok as f64 / n as f64))
            .collect(),
    })
}

/// Share of the record's implicit positive symptoms among `queries`, or
/// `None` when it has none. Queried symptoms are never repeated.
pub fn episode_recall(record: &PatientRecord, queries: impl IntoIterator<Item = usize>) -> Option<f64> {
    let implicit = record.implicit_positives().count();
    if implicit == 0 {
        return None;
    }
    let found = queries.into_iter().filter(|&j| record.implicit.get(&j) == Some(&true)).count();
    Some(found as f64 / implicit as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub disease: usize,
    /// Final-turn posterior probability of the diagnosed disease.
    pub confidence: f64,
    /// Positive symptoms (self-reported or found by asking) linked to the
    /// diagnosed disease in the network.
    pub supporting_symptoms: Vec<usize>,
}

pub fn report(final_trace: &TurnTrace, final_state: &SymptomState, graph: &DiseaseSymptomGraph) -> Result<DiagnosisReport> {
    let Action::Diagnose(disease) = final_trace.action else {
        return Err(Error::Contract("report requires a diagnosis turn".into()));
    };
    Ok(DiagnosisReport {
        disease,
        confidence: final_trace.posterior.probs[disease],
        supporting_symptoms: final_state.positives().filter(|&j| graph.is_connected(j, disease)).collect(),
    })
}

/// Every symptom of the record observed: positives as recorded, everything
/// else negative.
pub fn full_evidence(record: &PatientRecord, num_symptoms: usize) -> Evidence {
    let (positive, negative): (Vec<usize>, Vec<usize>) = (0..num_symptoms).partition(|&j| record.is_positive(j));
    Evidence { positive: positive.into_iter().collect(), negative: negative.into_iter().collect() }
}

/// Accuracy of the argmax classifier built from the enumeration oracle when
/// every symptom is revealed.
pub fn oracle_full_evidence_accuracy(
    params: &BayesParams,
    graph: &DiseaseSymptomGraph,
    records: &[PatientRecord],
) -> Result<f64> {
    let mut correct = 0;
    for r in records {
        let post = brute_force_posterior(params, graph, &full_evidence(r, graph.num_symptoms()))?;
        if post.argmax() == r.disease {
            correct += 1;
        }
    }
    Ok(correct as f64 / records.len().max(1) as f64)
}

/// The generating network of a synthetic spec as a fully connected graph.
/// Probabilities are clamped like learned parameters so logits stay finite.
pub fn true_network(spec: &SyntheticSpec) -> (DiseaseSymptomGraph, BayesParams) {
    let m = spec.diseases.len();
    let graph = DiseaseSymptomGraph {
        parents: vec![(0..m).collect(); spec.symptoms.len()],
        edge_threshold: 0,
        num_diseases: m,
    };
    let clamp = |p: f64| logit(p.clamp(1e-12, 1.0 - 1e-12));
    let cpt_logits = (0..spec.symptoms.len())
        .map(|j| {
            let mut table = vec![0.0; 1 << m];
            for d in 0..m {
                table[1 << d] = clamp(spec.cond_probs[d][j]);
            }
            table
        })
        .collect();
    let params = BayesParams { prior_logits: spec.priors.iter().map(|&p| clamp(p)).collect(), cpt_logits };
    (graph, params)
}
