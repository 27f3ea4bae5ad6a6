//! Dataset ingestion, counting and generation against their generating
//! specs.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bayes_inquiry::data::{count, synth_generate, Dataset, SyntheticSpec};
use bayes_inquiry::Error;

use common::random_spec;

/// `n_ds / n_d` recovers the conditionals within 3 binomial standard errors
/// (inflated slightly for the generator's redraw of all-negative patients).
#[test]
fn counts_recover_spec_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let spec = random_spec(&mut rng, 3, 6);
    let catalog = spec.catalog().unwrap();
    let records = synth_generate(&spec, 10_000, 4).unwrap();
    let counts = count(&records, &catalog);
    for (i, row) in spec.cond_probs.iter().enumerate() {
        let nd = counts.n_d[i] as f64;
        let prior_se = (spec.priors[i] * (1.0 - spec.priors[i]) / 10_000.0).sqrt();
        assert!((nd / 10_000.0 - spec.priors[i]).abs() < 3.0 * prior_se + 1e-3);
        // the generator conditions on at least one positive symptom
        let none: f64 = row.iter().map(|p| 1.0 - p).product();
        for (j, &p) in row.iter().enumerate() {
            let expected = p / (1.0 - none);
            let se = (expected * (1.0 - expected) / nd).sqrt();
            let got = counts.n_ds[i][j] as f64 / nd;
            assert!((got - expected).abs() < 3.0 * se, "d{i} s{j}: {got} vs {expected} (se {se})");
        }
    }
}

#[test]
fn every_record_has_one_explicit_positive() {
    let spec = SyntheticSpec::signature(3, 6, 2, 0.3, 0.01);
    for r in synth_generate(&spec, 2000, 5).unwrap() {
        assert_eq!(r.explicit.len(), 1);
        assert!(r.explicit.values().all(|&v| v));
        assert!(r.implicit.values().all(|&v| v));
        assert!(!r.implicit.contains_key(r.explicit.keys().next().unwrap()));
    }
}

#[test]
fn save_then_load_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::signature(4, 10, 2, 0.8, 0.1);
    let dataset = Dataset::new(spec.catalog().unwrap(), synth_generate(&spec, 500, 6).unwrap()).unwrap();
    let path = dir.path().join("d.json");
    dataset.save(&path).unwrap();
    let loaded = Dataset::load(&path).unwrap();
    assert_eq!(loaded, dataset);
    let again = dir.path().join("e.json");
    loaded.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    let spec_path = dir.path().join("spec.json");
    spec.save(&spec_path).unwrap();
    assert_eq!(SyntheticSpec::load(&spec_path).unwrap(), spec);
}

#[test]
fn generation_is_seeded() {
    let spec = SyntheticSpec::signature(2, 4, 2, 0.7, 0.2);
    assert_eq!(synth_generate(&spec, 300, 1).unwrap(), synth_generate(&spec, 300, 1).unwrap());
    assert_ne!(synth_generate(&spec, 300, 1).unwrap(), synth_generate(&spec, 300, 2).unwrap());
}

#[test]
fn malformed_documents_are_rejected() {
    let bad = [
        r#"{"diseases": ["a", "b"], "symptoms": ["x", "y"], "records": [{"disease_tag": "c", "explicit_symptoms": {"x": true}}]}"#,
        r#"{"diseases": ["a", "b"], "symptoms": ["x", "y"], "records": [{"disease_tag": "a", "explicit_symptoms": {"z": true}}]}"#,
        r#"{"diseases": ["a"], "symptoms": ["x", "y"], "records": []}"#,
        r#"{"diseases": ["a", "b"], "symptoms": ["x", "x"], "records": []}"#,
        "[1, 2, 3]",
    ];
    for doc in bad {
        assert!(Dataset::from_json(doc).is_err(), "{doc}");
    }
    assert!(matches!(Dataset::from_json("{"), Err(Error::Parse(_))));
}
