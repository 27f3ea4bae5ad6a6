//! The `inquiry` binary end to end: determinism, exit codes, config
//! precedence.

use std::path::Path;
use std::process::{Command, Output};

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::data::Dataset;
use bayes_inquiry::training::Agent;

fn inquiry(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inquiry")).args(args).output().expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, count: &str, seed: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = inquiry(&["synth", "--count", count, "--seed", seed, "--out", arg(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn synth_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = std::fs::read(synth(dir.path(), "a.json", "200", "11")).unwrap();
    let b = std::fs::read(synth(dir.path(), "b.json", "200", "11")).unwrap();
    let c = std::fs::read(synth(dir.path(), "c.json", "200", "12")).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_episode_training_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.json", "300", "3");
    let ck = dir.path().join("ck.json");
    let o = inquiry(&["train", "--data", arg(&data), "--episodes", "0", "--seed", "5", "--checkpoint", arg(&ck)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("effective configuration") && stderr.contains("root seed: 5"), "{stderr}");

    let saved = Checkpoint::load(&ck).unwrap();
    let dataset = Dataset::load(&data).unwrap();
    let (train, _) = dataset.split_dev(0.2);
    let init = Agent::initialize(&dataset.catalog, &train, 0, 5).unwrap();
    assert_eq!(saved.agent, init);
    assert_eq!(saved.episode, 0);
    assert_eq!(saved.seed, 5);

    let summary = dir.path().join("s.json");
    let o = inquiry(&["eval", "--checkpoint", arg(&ck), "--data", arg(&data), "--out", arg(&summary)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("accuracy:") && stdout.contains("recall:"), "{stdout}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&summary).unwrap()).unwrap();
    assert_eq!(json["episodes"], 300);

    let o = inquiry(&["explain", "--checkpoint", arg(&ck), "--data", arg(&data), "--record", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("turn 1:") && stdout.contains("diagnose"), "{stdout}");
}

#[test]
fn config_file_supplies_unset_flags() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.json", "200", "3");
    let ck = dir.path().join("ck.json");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, format!("episodes = 0\nseed = 21\nt-max = 6\ncheckpoint = {:?}\n", arg(&ck))).unwrap();
    let o = inquiry(&["train", "--config", arg(&cfg), "--data", arg(&data), "--seed", "22"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let saved = Checkpoint::load(&ck).unwrap();
    assert_eq!(saved.seed, 22);
    assert_eq!(saved.dialogue.max_turns, 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), "d.json", "50", "1");
    let missing = dir.path().join("missing.json");
    assert_eq!(inquiry(&["eval", "--data", arg(&data)]).status.code(), Some(2));
    assert_eq!(inquiry(&["eval", "--checkpoint", arg(&missing), "--data", arg(&data)]).status.code(), Some(2));
    assert_eq!(inquiry(&["serve", "--checkpoint", arg(&missing)]).status.code(), Some(2));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"diseases": ["a", "b"], "symptoms": ["x", "y"], "records": [{"disease_tag": "c"}]}"#).unwrap();
    let ck = dir.path().join("ck.json");
    let o = inquiry(&["train", "--data", arg(&bad), "--episodes", "0", "--checkpoint", arg(&ck)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(inquiry(&["train", "--data", arg(&bad), "--checkpoint", arg(&ck)]).status.code(), Some(3));

    assert_eq!(inquiry(&["train", "--no-such-flag"]).status.code(), Some(4));
    assert_eq!(inquiry(&["--help"]).status.code(), Some(0));
}
