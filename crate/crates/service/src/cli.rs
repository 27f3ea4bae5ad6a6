//! The `inquiry` command line. Settings resolve as flags, then the TOML file
//! given by `--config` (same key names as the long flags), then defaults.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rand::rngs::mock::StepRng;
use serde::{Deserialize, Serialize};

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::data::{load_dataset, synth_generate, Catalog, Dataset, PatientRecord, SyntheticSpec};
use bayes_inquiry::dialogue::{explain, Action, ActionView, DialogueConfig, Explanation, Mode};
use bayes_inquiry::eval::evaluate;
use bayes_inquiry::simulator::RewardConfig;
use bayes_inquiry::training::{run_episode, train, Agent, TrainConfig};

use crate::consultation::{Consultation, Status};
use crate::server::{serve, ServiceConfig, DEFAULT_SESSION_TTL};

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CHECKPOINT: u8 = 2;
pub const EXIT_DATASET: u8 = 3;
pub const EXIT_USAGE: u8 = 4;

const DEFAULT_PORT: u16 = 8080;
const DEFAULT_DEV_FRACTION: f64 = 0.2;
const DEFAULT_SYNTH_COUNT: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "inquiry", version, about = "Train, evaluate and serve the symptom-inquiry dialogue manager")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
    /// TOML file with defaults for any of the long flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train an agent on a dataset and save the best dev checkpoint.
    Train,
    /// Greedy evaluation of a checkpoint on a dataset.
    Eval,
    /// Generate a synthetic dataset.
    Synth,
    /// Interactive consultation in the terminal.
    Consult,
    /// Run the HTTP session service.
    Serve,
    /// Replay one record with the simulator and explain every turn.
    Explain,
}

macro_rules! options {
    ($( $(#[$doc:meta])* $field:ident : $ty:ty ),* $(,)?) => {
        #[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
        #[serde(rename_all = "kebab-case", deny_unknown_fields)]
        pub struct Options {
            $( $(#[$doc])* #[arg(long, global = true)] #[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>, )*
        }

        impl Options {
            /// Field-wise `self` with gaps filled from `fallback`.
            pub fn or(self, fallback: Options) -> Options {
                Options { $( $field: self.$field.or(fallback.$field), )* }
            }
        }
    };
}

options! {
    /// Dataset file (training, evaluation or explanation input).
    data: PathBuf,
    /// Separate dev dataset; otherwise the tail of --data is held out.
    dev: PathBuf,
    /// Share of --data held out for dev when --dev is absent.
    dev_fraction: f64,
    /// Synthetic population spec (JSON).
    spec: PathBuf,
    /// Checkpoint to read, or to write for `train`.
    checkpoint: PathBuf,
    /// Output file for `synth` datasets and `eval` JSON summaries.
    out: PathBuf,
    /// Number of records `synth` draws.
    count: usize,
    episodes: u64,
    seed: u64,
    /// Diagnosis confidence threshold.
    epsilon_d: f64,
    /// Maximum number of turns.
    t_max: u32,
    gamma: f64,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    /// Episodes between dev evaluations during training.
    checkpoint_every: u64,
    /// Minimum co-occurrence count for a disease-symptom edge.
    edge_threshold: u64,
    /// Episodes rolled out in parallel per parameter snapshot.
    rollout_batch: usize,
    /// JSON-lines training log.
    log: PathBuf,
    /// Record index for `explain`.
    record: usize,
    port: u16,
    /// Directory served at / by `serve`.
    static_dir: PathBuf,
    /// Persist `serve` sessions to this file.
    sessions_file: PathBuf,
    /// Idle seconds before a served session expires.
    session_ttl_secs: u64,
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl CliError {
    fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        Self { code: EXIT_FAILURE, error }
    }
}

impl From<bayes_inquiry::Error> for CliError {
    fn from(error: bayes_inquiry::Error) -> Self {
        Self { code: EXIT_FAILURE, error: error.into() }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Flags merged over the config file.
pub fn resolve(cli: &Cli) -> CliResult<Options> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .map_err(|e| CliError::new(EXIT_USAGE, e))?;
            toml::from_str::<Options>(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .map_err(|e| CliError::new(EXIT_USAGE, e))?
        }
        None => Options::default(),
    };
    Ok(cli.options.clone().or(file))
}

#[derive(Debug, Serialize)]
struct Effective<'a> {
    command: String,
    #[serde(flatten)]
    options: &'a Options,
    train: TrainConfig,
    dialogue: Option<DialogueConfig>,
}

impl Options {
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            gamma: self.gamma.unwrap_or(d.gamma),
            alpha: self.alpha.unwrap_or(d.alpha),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            episodes: self.episodes.unwrap_or(d.episodes),
            seed: self.seed.unwrap_or(d.seed),
            checkpoint_every: self.checkpoint_every.unwrap_or(d.checkpoint_every),
            edge_threshold: self.edge_threshold.unwrap_or(d.edge_threshold),
            rollout_batch: self.rollout_batch.unwrap_or(d.rollout_batch),
        }
    }

    /// Stop rule with `base` (the checkpoint's, or the default) underneath.
    pub fn dialogue_config(&self, base: DialogueConfig) -> DialogueConfig {
        DialogueConfig {
            confidence_threshold: self.epsilon_d.unwrap_or(base.confidence_threshold),
            max_turns: self.t_max.unwrap_or(base.max_turns),
        }
    }

    fn has_dialogue_override(&self) -> bool {
        self.epsilon_d.is_some() || self.t_max.is_some()
    }
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, code: u8) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| CliError::new(code, anyhow!("--{flag} is required")))
}

fn load_checkpoint(o: &Options) -> CliResult<Checkpoint> {
    let path = require(&o.checkpoint, "checkpoint", EXIT_CHECKPOINT)?;
    Checkpoint::load(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(|e| CliError::new(EXIT_CHECKPOINT, e))
}

fn load_data(path: &Path) -> CliResult<(Catalog, Vec<PatientRecord>)> {
    load_dataset(path)
        .with_context(|| format!("loading dataset {}", path.display()))
        .map_err(|e| CliError::new(EXIT_DATASET, e))
}

/// Loads `--data` and checks it against the checkpoint's catalog.
fn load_data_for(o: &Options, ck: &Checkpoint) -> CliResult<Vec<PatientRecord>> {
    let (catalog, records) = load_data(require(&o.data, "data", EXIT_USAGE)?)?;
    if catalog != ck.catalog {
        return Err(CliError::new(EXIT_DATASET, anyhow!("dataset catalog differs from the checkpoint's")));
    }
    Ok(records)
}

pub fn run(cli: Cli) -> CliResult {
    let options = resolve(&cli)?;
    let train_config = options.train_config();
    let dialogue = match cli.command {
        Command::Train => Some(options.dialogue_config(DialogueConfig::default())),
        _ if options.has_dialogue_override() => Some(options.dialogue_config(DialogueConfig::default())),
        _ => None,
    };
    let effective = Effective { command: format!("{:?}", cli.command).to_lowercase(), options: &options, train: train_config, dialogue };
    let rendered = toml::to_string(&effective).map_err(|e| CliError::new(EXIT_FAILURE, e))?;
    eprintln!("effective configuration:\n{}", rendered.trim_end());
    eprintln!("root seed: {}", train_config.seed);
    match cli.command {
        Command::Synth => synth(&options, train_config.seed),
        Command::Train => run_train(&options, &train_config),
        Command::Eval => run_eval(&options),
        Command::Consult => {
            let ck = load_checkpoint(&options)?;
            let dialogue = options.dialogue_config(ck.dialogue);
            let stdin = std::io::stdin();
            consult(&ck, &dialogue, &mut stdin.lock(), &mut std::io::stdout())
        }
        Command::Serve => run_serve(&options),
        Command::Explain => run_explain(&options),
    }
}

fn synth(o: &Options, seed: u64) -> CliResult {
    let spec = match &o.spec {
        Some(path) => SyntheticSpec::load(path)
            .with_context(|| format!("loading spec {}", path.display()))
            .map_err(|e| CliError::new(EXIT_DATASET, e))?,
        None => SyntheticSpec::signature(4, 12, 2, 0.9, 0.05),
    };
    let out = require(&o.out, "out", EXIT_USAGE)?;
    let records = synth_generate(&spec, o.count.unwrap_or(DEFAULT_SYNTH_COUNT), seed)?;
    let dataset = Dataset::new(spec.catalog()?, records)?;
    dataset.save(out)?;
    println!("wrote {} records to {}", dataset.records.len(), out.display());
    Ok(())
}

fn run_train(o: &Options, config: &TrainConfig) -> CliResult {
    let out = require(&o.checkpoint, "checkpoint", EXIT_USAGE)?;
    let (catalog, records) = load_data(require(&o.data, "data", EXIT_USAGE)?)?;
    let (train_records, dev_records) = match &o.dev {
        Some(path) => {
            let (dev_catalog, dev) = load_data(path)?;
            if dev_catalog != catalog {
                return Err(CliError::new(EXIT_DATASET, anyhow!("dev catalog differs from the training catalog")));
            }
            (records, dev)
        }
        None => {
            let dataset = Dataset { catalog: catalog.clone(), records };
            dataset.split_dev(o.dev_fraction.unwrap_or(DEFAULT_DEV_FRACTION))
        }
    };
    let dialogue = o.dialogue_config(DialogueConfig::default());
    let rewards = RewardConfig::default();
    let agent = Agent::initialize(&catalog, &train_records, config.edge_threshold, config.seed)?;
    let mut log_file = match &o.log {
        Some(p) => Some(BufWriter::new(File::create(p).with_context(|| format!("creating log {}", p.display()))?)),
        None => None,
    };
    let outcome = train(
        agent,
        &train_records,
        &dev_records,
        &dialogue,
        &rewards,
        config,
        log_file.as_mut().map(|w| w as &mut dyn Write),
    )?;
    if let Some(mut w) = log_file {
        w.flush().context("flushing log")?;
    }
    for e in &outcome.log {
        println!(
            "episode {:>6}  reward {:>10.2}  dev acc {:.4}  dev recall {:.4}  mu {:.3}  turns {:.2}",
            e.episode, e.cumulative_reward, e.dev_accuracy, e.dev_recall, e.mean_mu, e.mean_turns
        );
    }
    let ck = Checkpoint::new(catalog, outcome.best, dialogue, *config, rewards, outcome.best_episode);
    ck.save(out)?;
    println!("best dev checkpoint (episode {}) saved to {}", outcome.best_episode, out.display());
    println!("{}", outcome.best_summary);
    Ok(())
}

fn run_eval(o: &Options) -> CliResult {
    let ck = load_checkpoint(o)?;
    let records = load_data_for(o, &ck)?;
    let dialogue = o.dialogue_config(ck.dialogue);
    let summary = evaluate(&ck.agent.model, &records, &dialogue)?;
    println!("{summary}");
    for (d, acc) in summary.per_disease_accuracy.iter().enumerate() {
        if let Some(acc) = acc {
            println!("  {}: {acc:.4}", ck.catalog.diseases[d]);
        }
    }
    if let Some(out) = &o.out {
        let text = serde_json::to_string_pretty(&summary).context("serializing summary")?;
        std::fs::write(out, text + "\n").with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn run_serve(o: &Options) -> CliResult {
    let ck = load_checkpoint(o)?;
    let config = ServiceConfig {
        dialogue: o.has_dialogue_override().then(|| o.dialogue_config(ck.dialogue)),
        session_ttl: o.session_ttl_secs.map_or(DEFAULT_SESSION_TTL, Duration::from_secs),
        static_dir: o.static_dir.clone(),
        sessions_file: o.sessions_file.clone(),
    };
    let port = o.port.unwrap_or(DEFAULT_PORT);
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(serve(ck, config, port))?;
    Ok(())
}

fn run_explain(o: &Options) -> CliResult {
    let ck = load_checkpoint(o)?;
    let records = load_data_for(o, &ck)?;
    let index = o.record.unwrap_or(0);
    let record = records
        .get(index)
        .ok_or_else(|| CliError::new(EXIT_USAGE, anyhow!("record {index} out of range ({} records)", records.len())))?;
    let dialogue = o.dialogue_config(ck.dialogue);
    let model = &ck.agent.model;
    let ep = run_episode(model, record, &dialogue, &ck.rewards, Mode::Greedy, &mut StepRng::new(0, 0))?;
    let names = &ck.catalog.symptoms;
    let reported: Vec<&str> = record.explicit.iter().filter(|(_, &v)| v).map(|(&j, _)| names[j].as_str()).collect();
    println!("record {index}: true disease {}; self-reported {}", ck.catalog.diseases[record.disease], reported.join(", "));
    let mut out = std::io::stdout();
    for trace in &ep.traces {
        // the simulator answers from the record; absent symptoms are negative
        let answer = match trace.action {
            Action::Query(j) => Some(record.is_positive(j)),
            Action::Diagnose(_) => None,
        };
        print_explanation(&mut out, &explain(trace, &ck.catalog, &model.graph), answer).context("writing output")?;
    }
    println!("outcome: {}", if ep.correct { "correct" } else { "incorrect" });
    Ok(())
}

fn print_explanation(out: &mut impl Write, e: &Explanation, answer: Option<bool>) -> std::io::Result<()> {
    let top: Vec<String> = e.top_diseases.iter().map(|r| format!("{} {:.3}", r.disease, r.probability)).collect();
    writeln!(out, "turn {}: top [{}]  mu {:.3} -> {}", e.turn, top.join(", "), e.mu, e.logic_label)?;
    match &e.action {
        ActionView::Query { symptom, score, ensure_contribution, distinguish_contribution, connected_diseases, .. } => {
            write!(
                out,
                "  ask {symptom} (score {score:.3}: ensure {ensure_contribution:.3}, distinguish {distinguish_contribution:.3}; linked to {})",
                connected_diseases.join(", ")
            )?;
            match answer {
                Some(a) => writeln!(out, " -> {}", if a { "yes" } else { "no" }),
                None => writeln!(out),
            }
        }
        ActionView::Diagnose { disease, confidence, stop, .. } => {
            writeln!(out, "  diagnose {disease} (confidence {confidence:.3}, stop {stop:?})")
        }
    }
}

fn parse_yes_no(line: &str) -> Option<bool> {
    match line.trim().to_lowercase().as_str() {
        "y" | "yes" | "1" | "true" => Some(true),
        "n" | "no" | "0" | "false" => Some(false),
        _ => None,
    }
}

/// Terminal consultation. The first line lists self-reported symptoms as
/// comma-separated names (prefix `-` for absent ones); after that every
/// question is answered with y/n.
pub fn consult(ck: &Checkpoint, dialogue: &DialogueConfig, input: &mut impl BufRead, out: &mut impl Write) -> CliResult {
    let io = |e: std::io::Error| CliError::from(anyhow::Error::from(e));
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> CliResult<bool> {
        line.clear();
        Ok(input.read_line(line).map_err(io)? > 0)
    };
    let initial = loop {
        writeln!(out, "Symptoms you have (comma-separated, -name for absent):").map_err(io)?;
        if !read_line(&mut line)? {
            return Err(anyhow!("input ended before any symptom was reported").into());
        }
        match parse_initial(&line, &ck.catalog) {
            Ok(m) => break m,
            Err(msg) => writeln!(out, "{msg}").map_err(io)?,
        }
    };
    let mut c = Consultation::start(ck, dialogue, &initial).map_err(anyhow::Error::from)?;
    while c.status == Status::AwaitingAnswer {
        let j = c.pending.expect("awaiting consultations have a question");
        let e = explain(c.traces.last().expect("one trace per turn"), &ck.catalog, &ck.agent.model.graph);
        writeln!(out, "[{}] Do you have {}? (y/n)", e.logic_label, ck.catalog.symptoms[j]).map_err(io)?;
        let answer = loop {
            if !read_line(&mut line)? {
                return Err(anyhow!("input ended mid-consultation").into());
            }
            match parse_yes_no(&line) {
                Some(a) => break a,
                None => writeln!(out, "please answer y or n").map_err(io)?,
            }
        };
        c.answer(ck, dialogue, answer).map_err(anyhow::Error::from)?;
    }
    let report = c.report.as_ref().expect("diagnosed consultations carry a report");
    let support: Vec<&str> = report.supporting_symptoms.iter().map(|&j| ck.catalog.symptoms[j].as_str()).collect();
    writeln!(
        out,
        "Diagnosis: {} (confidence {:.3}) after {} turns; supporting symptoms: {}",
        ck.catalog.diseases[report.disease],
        report.confidence,
        c.traces.len(),
        if support.is_empty() { "none".to_string() } else { support.join(", ") }
    )
    .map_err(io)?;
    Ok(())
}

fn parse_initial(line: &str, catalog: &Catalog) -> Result<BTreeMap<usize, bool>, String> {
    let mut out = BTreeMap::new();
    for item in line.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, value) = match item.strip_prefix('-') {
            Some(rest) => (rest.trim(), false),
            None => (item, true),
        };
        let j = catalog.symptom_index(name).ok_or_else(|| format!("unknown symptom {name:?}"))?;
        out.insert(j, value);
    }
    if out.is_empty() {
        return Err("report at least one symptom".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::checkpoint;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "episodes = 5\nseed = 3\nepsilon-d = 0.7\n").unwrap();
        let cli = Cli::try_parse_from(["inquiry", "train", "--config", cfg.to_str().unwrap(), "--seed", "9"]).unwrap();
        let o = resolve(&cli).unwrap();
        let t = o.train_config();
        assert_eq!((t.episodes, t.seed), (5, 9));
        assert_eq!(t.gamma, TrainConfig::default().gamma);
        assert_eq!(o.dialogue_config(DialogueConfig::default()).confidence_threshold, 0.7);
    }

    #[test]
    fn unknown_config_keys_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.toml");
        std::fs::write(&cfg, "epsilon_d = 0.7\n").unwrap();
        let cli = Cli::try_parse_from(["inquiry", "eval", "--config", cfg.to_str().unwrap()]).unwrap();
        assert_eq!(resolve(&cli).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn terminal_consultation_reaches_a_diagnosis() {
        let ck = checkpoint();
        let dialogue = DialogueConfig { confidence_threshold: 1.0, max_turns: 3 };
        let mut input = std::io::Cursor::new("nonsense\nsymptom_0, -symptom_1\nmaybe\ny\nn\n");
        let mut out = Vec::new();
        consult(&ck, &dialogue, &mut input, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("unknown symptom \"nonsense\""), "{text}");
        assert!(text.contains("please answer y or n"));
        assert!(text.contains("Diagnosis: disease_"));
        assert!(text.contains("after 3 turns"));
    }

    #[test]
    fn consultation_fails_on_truncated_input() {
        let ck = checkpoint();
        let dialogue = DialogueConfig { confidence_threshold: 0.999, max_turns: 5 };
        let mut input = std::io::Cursor::new("symptom_0\n");
        assert!(consult(&ck, &dialogue, &mut input, &mut Vec::new()).is_err());
    }
}
