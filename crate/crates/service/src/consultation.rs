//! The consultation state machine shared by the HTTP sessions and the
//! terminal `consult` loop. The dialogue manager always runs greedily here.

use std::collections::BTreeMap;

use rand::rngs::mock::StepRng;
use serde::{Deserialize, Serialize};

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::dialogue::{apply_answer, explain, step, Action, DialogueConfig, Explanation, Mode, SymptomState, SymptomValue, TurnTrace};
use bayes_inquiry::eval::{report, DiagnosisReport};
use bayes_inquiry::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingAnswer,
    Diagnosed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Consultation {
    pub state: SymptomState,
    pub traces: Vec<TurnTrace>,
    pub pending: Option<usize>,
    pub status: Status,
    pub report: Option<DiagnosisReport>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConsultError {
    #[error("at least one initial symptom is required")]
    NoSymptoms,
    #[error("symptom index {0} out of range")]
    UnknownSymptom(usize),
    #[error("consultation is not awaiting an answer ({0:?})")]
    NotAwaiting(Status),
    #[error(transparent)]
    Engine(#[from] Error),
}

impl Consultation {
    /// Seeds the state with the self-report and runs the first turn.
    pub fn start(checkpoint: &Checkpoint, dialogue: &DialogueConfig, initial: &BTreeMap<usize, bool>) -> Result<Self, ConsultError> {
        if initial.is_empty() {
            return Err(ConsultError::NoSymptoms);
        }
        let n = checkpoint.catalog.num_symptoms();
        let mut state = SymptomState::unknown(n);
        for (&j, &v) in initial {
            if j >= n {
                return Err(ConsultError::UnknownSymptom(j));
            }
            state.values[j] = SymptomValue::from(v);
        }
        let mut c = Self { state, traces: Vec::new(), pending: None, status: Status::AwaitingAnswer, report: None };
        c.advance(checkpoint, dialogue)?;
        Ok(c)
    }

    pub fn answer(&mut self, checkpoint: &Checkpoint, dialogue: &DialogueConfig, positive: bool) -> Result<(), ConsultError> {
        let j = match (self.status, self.pending) {
            (Status::AwaitingAnswer, Some(j)) => j,
            (status, _) => return Err(ConsultError::NotAwaiting(status)),
        };
        self.state = apply_answer(&self.state, j, positive)?;
        self.pending = None;
        self.advance(checkpoint, dialogue)
    }

    fn advance(&mut self, checkpoint: &Checkpoint, dialogue: &DialogueConfig) -> Result<(), ConsultError> {
        let model = &checkpoint.agent.model;
        let s = step(&self.state, model, dialogue, Mode::Greedy, &mut StepRng::new(0, 0))?;
        match s.action {
            Action::Query(j) => {
                self.pending = Some(j);
                self.status = Status::AwaitingAnswer;
            }
            Action::Diagnose(_) => {
                self.report = Some(report(&s.trace, &self.state, &model.graph)?);
                self.status = Status::Diagnosed;
            }
        }
        self.traces.push(s.trace);
        Ok(())
    }

    pub fn expire(&mut self) {
        self.status = Status::Expired;
        self.pending = None;
    }

    pub fn explanations(&self, checkpoint: &Checkpoint) -> Vec<Explanation> {
        self.traces.iter().map(|t| explain(t, &checkpoint.catalog, &checkpoint.agent.model.graph)).collect()
    }
}
