//! Random instances shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;

use bayes_inquiry::data::{synth_generate, Catalog, PatientRecord, SyntheticSpec};
use bayes_inquiry::dialogue::{SymptomState, SymptomValue};
use bayes_inquiry::params::Parameterized;
use bayes_inquiry::training::Agent;

/// Random priors and conditionals; every disease has some symptom mass.
pub fn random_spec(rng: &mut impl Rng, m: usize, n: usize) -> SyntheticSpec {
    let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    SyntheticSpec {
        diseases: (0..m).map(|i| format!("d{i}")).collect(),
        symptoms: (0..n).map(|j| format!("s{j}")).collect(),
        priors: weights.iter().map(|w| w / total).collect(),
        cond_probs: (0..m).map(|_| (0..n).map(|_| rng.gen_range(0.02..0.95)).collect()).collect(),
    }
}

/// Adds uniform noise in `[-scale, scale]` to every parameter.
pub fn jitter<P: Parameterized + ?Sized>(params: &mut P, rng: &mut impl Rng, scale: f64) {
    for key in params.keys() {
        *params.get_mut(&key).unwrap() += rng.gen_range(-scale..scale);
    }
}

pub struct Instance {
    pub spec: SyntheticSpec,
    pub catalog: Catalog,
    pub records: Vec<PatientRecord>,
    pub agent: Agent,
}

/// A small population and an agent initialized from it, with every weight
/// perturbed so no gradient is trivially zero.
pub fn random_instance(rng: &mut impl Rng, max_diseases: usize, max_symptoms: usize, records: usize) -> Instance {
    let m = rng.gen_range(2..=max_diseases);
    let n = rng.gen_range(m.max(3)..=max_symptoms);
    let spec = random_spec(rng, m, n);
    let catalog = spec.catalog().unwrap();
    let records = synth_generate(&spec, records, rng.gen()).unwrap();
    let mut agent = Agent::initialize(&catalog, &records, 0, rng.gen()).unwrap();
    jitter(&mut agent, rng, 0.5);
    Instance { spec, catalog, records, agent }
}

/// At least one known and one unknown symptom.
pub fn random_state(rng: &mut impl Rng, n: usize, turn: u32) -> SymptomState {
    loop {
        let values: Vec<SymptomValue> = (0..n)
            .map(|_| match rng.gen_range(0..4) {
                0 => SymptomValue::Positive,
                1 => SymptomValue::Negative,
                _ => SymptomValue::Unknown,
            })
            .collect();
        let known = values.iter().filter(|v| **v != SymptomValue::Unknown).count();
        if known > 0 && known < n {
            return SymptomState { values, turn };
        }
    }
}
