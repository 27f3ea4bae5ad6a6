//! User simulator: a patient record that answers questions truthfully and a
//! judge that scores the final diagnosis.

use serde::{Deserialize, Serialize};

use crate::data::PatientRecord;
use crate::dialogue::{apply_answer, Action, SymptomState, SymptomValue};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub correct_diagnosis: f64,
    pub wrong_diagnosis: f64,
    pub negative_answer_query: f64,
    pub positive_answer_query: f64,
    pub step_cost: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            correct_diagnosis: 2.0,
            wrong_diagnosis: -2.0,
            negative_answer_query: -0.2,
            positive_answer_query: 0.1,
            step_cost: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if self.correct_diagnosis > 0.0 && self.wrong_diagnosis < 0.0 {
            Ok(())
        } else {
            Err(Error::Validation("need correct_diagnosis > 0 > wrong_diagnosis".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub record: PatientRecord,
    pub state: SymptomState,
    pub done: bool,
}

/// Seeds the state with the self-reported symptoms.
pub fn reset(record: &PatientRecord, num_symptoms: usize) -> EnvState {
    let mut state = SymptomState::unknown(num_symptoms);
    for (&j, &v) in &record.explicit {
        state.values[j] = SymptomValue::from(v);
    }
    EnvState { record: record.clone(), state, done: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Response {
    pub reward: f64,
    pub done: bool,
    /// Answer to a query; `None` after a diagnosis.
    pub answer: Option<bool>,
}

/// Applies the agent's action. Symptoms the record does not mention are
/// answered as negative.
pub fn respond(env: &mut EnvState, action: Action, rewards: &RewardConfig) -> Result<Response> {
    if env.done {
        return Err(Error::Contract("episode already finished".into()));
    }
    match action {
        Action::Query(j) => {
            let positive = env.record.is_positive(j);
            env.state = apply_answer(&env.state, j, positive)?;
            let base = if positive { rewards.positive_answer_query } else { rewards.negative_answer_query };
            Ok(Response { reward: base + rewards.step_cost, done: false, answer: Some(positive) })
        }
        Action::Diagnose(d) => {
            env.done = true;
            let reward = if d == env.record.disease { rewards.correct_diagnosis } else { rewards.wrong_diagnosis };
            Ok(Response { reward, done: true, answer: None })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn record() -> PatientRecord {
        PatientRecord {
            disease: 1,
            explicit: BTreeMap::from([(2, true), (5, false)]),
            implicit: BTreeMap::from([(0, true), (3, false)]),
        }
    }

    #[test]
    fn reset_seeds_explicit_symptoms() {
        let env = reset(&record(), 6);
        assert_eq!(env.state.values[2], SymptomValue::Positive);
        assert_eq!(env.state.values[5], SymptomValue::Negative);
        assert_eq!(env.state.known_count(), 2);
        assert_eq!(env.state.turn, 1);
        assert!(!env.done);
        assert_eq!(reset(&record(), 6), env);
    }

    #[test]
    fn rewards_follow_answers() {
        let r = RewardConfig::default();
        let mut env = reset(&record(), 6);
        let a = respond(&mut env, Action::Query(0), &r).unwrap();
        assert_eq!((a.answer, a.reward), (Some(true), 0.1));
        let a = respond(&mut env, Action::Query(4), &r).unwrap();
        assert_eq!((a.answer, a.reward), (Some(false), -0.2));
        let a = respond(&mut env, Action::Query(3), &r).unwrap();
        assert_eq!(a.answer, Some(false));
        assert_eq!(env.state.turn, 4);
        assert!(respond(&mut env, Action::Query(3), &r).is_err());
        let a = respond(&mut env, Action::Diagnose(1), &r).unwrap();
        assert_eq!((a.reward, a.done), (2.0, true));
        assert!(respond(&mut env, Action::Diagnose(1), &r).is_err());
    }

    #[test]
    fn wrong_diagnosis_and_step_cost() {
        let r = RewardConfig { step_cost: -0.05, ..Default::default() };
        let mut env = reset(&record(), 6);
        assert!((respond(&mut env, Action::Query(1), &r).unwrap().reward + 0.25).abs() < 1e-12);
        assert_eq!(respond(&mut env, Action::Diagnose(0), &r).unwrap().reward, -2.0);
        assert!(RewardConfig { wrong_diagnosis: 1.0, ..Default::default() }.validate().is_err());
    }
}
