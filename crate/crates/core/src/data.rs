//! Dataset schema, co-occurrence statistics and the synthetic patient
//! generator.
//!
//! On disk a dataset is a JSON document:
//!
//! ```json
//! {
//!   "diseases": ["flu", "cold"],
//!   "symptoms": ["fever", "cough", "sneeze"],
//!   "records": [
//!     { "disease_tag": "flu",
//!       "explicit_symptoms": { "fever": true },
//!       "implicit_symptoms": { "cough": true, "sneeze": false } }
//!   ]
//! }
//! ```
//!
//! Records are held in memory with symptom and disease names resolved to
//! indices into the [`Catalog`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    pub diseases: Vec<String>,
    pub symptoms: Vec<String>,
}

impl Catalog {
    pub fn new(diseases: Vec<String>, symptoms: Vec<String>) -> Result<Self> {
        if diseases.len() < 2 || symptoms.len() < 2 {
            return Err(Error::Validation(format!(
                "catalog needs at least 2 diseases and 2 symptoms, got {} and {}",
                diseases.len(),
                symptoms.len()
            )));
        }
        for (kind, names) in [("disease", &diseases), ("symptom", &symptoms)] {
            let mut seen = HashSet::new();
            for n in names {
                if !seen.insert(n) {
                    return Err(Error::Validation(format!("duplicate {kind} name {n:?}")));
                }
            }
        }
        Ok(Self { diseases, symptoms })
    }

    pub fn num_diseases(&self) -> usize {
        self.diseases.len()
    }

    pub fn num_symptoms(&self) -> usize {
        self.symptoms.len()
    }

    pub fn disease_index(&self, name: &str) -> Option<usize> {
        self.diseases.iter().position(|d| d == name)
    }

    pub fn symptom_index(&self, name: &str) -> Option<usize> {
        self.symptoms.iter().position(|s| s == name)
    }

    /// Stable content hash, stored in checkpoints to detect catalog drift.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for d in &self.diseases {
            h.update(b"d:");
            h.update(d.as_bytes());
            h.update([0]);
        }
        for s in &self.symptoms {
            h.update(b"s:");
            h.update(s.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }
}

/// One patient: a single ground-truth disease, the symptoms volunteered in
/// the self-report, and the ones that can only be found by asking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub disease: usize,
    pub explicit: BTreeMap<usize, bool>,
    pub implicit: BTreeMap<usize, bool>,
}

impl PatientRecord {
    pub fn validate(&self, catalog: &Catalog) -> Result<(), String> {
        if self.disease >= catalog.num_diseases() {
            return Err(format!("disease index {} out of range", self.disease));
        }
        if self.explicit.is_empty() {
            return Err("explicit symptom set is empty".into());
        }
        let n = catalog.num_symptoms();
        if let Some(j) = self.explicit.keys().chain(self.implicit.keys()).find(|&&j| j >= n) {
            return Err(format!("symptom index {j} out of range"));
        }
        if let Some(j) = self.explicit.keys().find(|j| self.implicit.contains_key(j)) {
            return Err(format!("symptom {j} is both explicit and implicit"));
        }
        Ok(())
    }

    /// The symptom value the patient would report, if it is recorded at all.
    pub fn symptom(&self, j: usize) -> Option<bool> {
        self.explicit.get(&j).or_else(|| self.implicit.get(&j)).copied()
    }

    pub fn is_positive(&self, j: usize) -> bool {
        self.symptom(j) == Some(true)
    }

    pub fn implicit_positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.implicit.iter().filter(|(_, &v)| v).map(|(&j, _)| j)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RecordFile {
    disease_tag: String,
    #[serde(default)]
    explicit_symptoms: BTreeMap<String, bool>,
    #[serde(default)]
    implicit_symptoms: BTreeMap<String, bool>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetFile {
    diseases: Vec<String>,
    symptoms: Vec<String>,
    records: Vec<RecordFile>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub catalog: Catalog,
    pub records: Vec<PatientRecord>,
}

impl Dataset {
    pub fn new(catalog: Catalog, records: Vec<PatientRecord>) -> Result<Self> {
        for (i, r) in records.iter().enumerate() {
            r.validate(&catalog)
                .map_err(|message| Error::Schema { record: i, message })?;
        }
        Ok(Self { catalog, records })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        let catalog = Catalog::new(file.diseases, file.symptoms)?;
        let mut records = Vec::with_capacity(file.records.len());
        for (i, rec) in file.records.into_iter().enumerate() {
            let schema = |message: String| Error::Schema { record: i, message };
            let disease = catalog
                .disease_index(&rec.disease_tag)
                .ok_or_else(|| schema(format!("unknown disease {:?}", rec.disease_tag)))?;
            let resolve = |map: BTreeMap<String, bool>| -> Result<BTreeMap<usize, bool>> {
                map.into_iter()
                    .map(|(name, v)| {
                        catalog
                            .symptom_index(&name)
                            .map(|j| (j, v))
                            .ok_or_else(|| schema(format!("unknown symptom {name:?}")))
                    })
                    .collect()
            };
            let record = PatientRecord {
                disease,
                explicit: resolve(rec.explicit_symptoms)?,
                implicit: resolve(rec.implicit_symptoms)?,
            };
            if record.explicit.is_empty() {
                return Err(Error::Validation(format!("record {i}: explicit symptom set is empty")));
            }
            record.validate(&catalog).map_err(schema)?;
            records.push(record);
        }
        Ok(Self { catalog, records })
    }

    pub fn to_json(&self) -> Result<String> {
        let names = |m: &BTreeMap<usize, bool>| {
            m.iter()
                .map(|(&j, &v)| (self.catalog.symptoms[j].clone(), v))
                .collect::<BTreeMap<_, _>>()
        };
        let file = DatasetFile {
            diseases: self.catalog.diseases.clone(),
            symptoms: self.catalog.symptoms.clone(),
            records: self
                .records
                .iter()
                .map(|r| RecordFile {
                    disease_tag: self.catalog.diseases[r.disease].clone(),
                    explicit_symptoms: names(&r.explicit),
                    implicit_symptoms: names(&r.implicit),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Deterministic split: the last `ceil(fraction * len)` records become
    /// the dev set.
    pub fn split_dev(&self, fraction: f64) -> (Vec<PatientRecord>, Vec<PatientRecord>) {
        let n = self.records.len();
        let dev = ((n as f64) * fraction.clamp(0.0, 1.0)).ceil() as usize;
        let dev = dev.min(n.saturating_sub(1));
        let (train, dev) = self.records.split_at(n - dev);
        (train.to_vec(), dev.to_vec())
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Catalog, Vec<PatientRecord>)> {
    let ds = Dataset::load(path)?;
    Ok((ds.catalog, ds.records))
}

/// Disease/symptom co-occurrence statistics over a record set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CooccurrenceCounts {
    /// `n_ds[i][j]`: patients with disease `i` and symptom `j` positive.
    pub n_ds: Vec<Vec<u64>>,
    /// `n_d[i]`: patients with disease `i`.
    pub n_d: Vec<u64>,
    /// `joint[i][j][d][s]`: 2x2 contingency over disease `i` present (`d`)
    /// and symptom `j` positive (`s`).
    pub joint: Vec<Vec<[[u64; 2]; 2]>>,
    pub total: u64,
}

impl CooccurrenceCounts {
    pub fn num_diseases(&self) -> usize {
        self.n_d.len()
    }

    pub fn num_symptoms(&self) -> usize {
        self.n_ds.first().map_or(0, Vec::len)
    }
}

/// A symptom counts as positive when it is `true` in either map; anything
/// else (absent or `false`) counts as not positive.
pub fn count(records: &[PatientRecord], catalog: &Catalog) -> CooccurrenceCounts {
    let (m, n) = (catalog.num_diseases(), catalog.num_symptoms());
    let mut n_ds = vec![vec![0u64; n]; m];
    let mut n_d = vec![0u64; m];
    let mut n_s = vec![0u64; n];
    for r in records {
        n_d[r.disease] += 1;
        for (&j, &v) in r.explicit.iter().chain(&r.implicit) {
            if v {
                n_ds[r.disease][j] += 1;
                n_s[j] += 1;
            }
        }
    }
    let total = records.len() as u64;
    let joint = (0..m)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let both = n_ds[i][j];
                    let d_only = n_d[i] - both;
                    let s_only = n_s[j] - both;
                    let neither = total - n_d[i] - s_only;
                    [[neither, s_only], [d_only, both]]
                })
                .collect()
        })
        .collect();
    CooccurrenceCounts { n_ds, n_d, joint, total }
}

/// Ground-truth generative network for synthetic patients: a disease prior
/// and independent per-disease symptom probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub diseases: Vec<String>,
    pub symptoms: Vec<String>,
    pub priors: Vec<f64>,
    /// `cond_probs[i][j] = P(symptom j | disease i)`.
    pub cond_probs: Vec<Vec<f64>>,
}

impl SyntheticSpec {
    /// Each disease gets `per_disease` signature symptoms that fire with
    /// probability `p_signature`; every other pair fires with `p_background`.
    /// Symptoms are assigned in order; the remainder carry no signature.
    pub fn signature(
        num_diseases: usize,
        num_symptoms: usize,
        per_disease: usize,
        p_signature: f64,
        p_background: f64,
    ) -> Self {
        assert!(num_diseases * per_disease <= num_symptoms, "not enough symptoms for signatures");
        let cond_probs = (0..num_diseases)
            .map(|i| {
                (0..num_symptoms)
                    .map(|j| if j / per_disease == i { p_signature } else { p_background })
                    .collect()
            })
            .collect();
        Self {
            diseases: (0..num_diseases).map(|i| format!("disease_{i}")).collect(),
            symptoms: (0..num_symptoms).map(|j| format!("symptom_{j}")).collect(),
            priors: vec![1.0 / num_diseases as f64; num_diseases],
            cond_probs,
        }
    }

    pub fn catalog(&self) -> Result<Catalog> {
        Catalog::new(self.diseases.clone(), self.symptoms.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.diseases.len(), self.symptoms.len());
        if self.priors.len() != m || self.cond_probs.len() != m {
            return Err(Error::Validation("priors/cond_probs must have one entry per disease".into()));
        }
        if self.cond_probs.iter().any(|row| row.len() != n) {
            return Err(Error::Validation("cond_probs rows must have one entry per symptom".into()));
        }
        let in_unit = |p: &f64| (0.0..=1.0).contains(p);
        if !self.priors.iter().all(in_unit) || !self.cond_probs.iter().flatten().all(in_unit) {
            return Err(Error::Validation("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("priors sum to {sum}, expected 1")));
        }
        if let Some(i) = self.cond_probs.iter().position(|row| row.iter().all(|&p| p == 0.0)) {
            return Err(Error::Generation(format!(
                "disease {:?} has no symptom with non-zero probability",
                self.diseases[i]
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Draws `count` patients from `spec`. A draw with no positive symptom is
/// redrawn for the same disease, since the self-report needs one.
pub fn synth_generate(spec: &SyntheticSpec, count: usize, seed: u64) -> Result<Vec<PatientRecord>> {
    spec.validate()?;
    if count == 0 {
        return Err(Error::Validation("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let disease = sample_categorical(&spec.priors, rng.gen::<f64>());
        let positives = loop {
            let pos: Vec<usize> = spec.cond_probs[disease]
                .iter()
                .enumerate()
                .filter(|(_, &p)| rng.gen::<f64>() < p)
                .map(|(j, _)| j)
                .collect();
            if !pos.is_empty() {
                break pos;
            }
        };
        let chosen = positives[rng.gen_range(0..positives.len())];
        records.push(PatientRecord {
            disease,
            explicit: BTreeMap::from([(chosen, true)]),
            implicit: positives.into_iter().filter(|&j| j != chosen).map(|j| (j, true)).collect(),
        });
    }
    Ok(records)
}

/// Index of the first cumulative weight exceeding `u * total`.
pub fn sample_categorical(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_nonzero = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    last_nonzero
}

/// Map from names to indices for quick lookups by the service layer.
pub fn symptom_lookup(catalog: &Catalog) -> HashMap<&str, usize> {
    catalog.symptoms.iter().enumerate().map(|(j, s)| (s.as_str(), j)).collect()
}
