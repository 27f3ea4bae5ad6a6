//! Train with a fixed seed, save a checkpoint, reload it and confirm the
//! reloaded model evaluates identically; a second run from the same seed
//! produces the same bytes.
//!
//! ```text
//! cargo run --release -p bayes-inquiry --example checkpoint_roundtrip
//! ```

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::data::{synth_generate, SyntheticSpec};
use bayes_inquiry::dialogue::DialogueConfig;
use bayes_inquiry::eval::evaluate;
use bayes_inquiry::simulator::RewardConfig;
use bayes_inquiry::training::{train, Agent, TrainConfig};

fn run(spec: &SyntheticSpec) -> bayes_inquiry::Result<Checkpoint> {
    let catalog = spec.catalog()?;
    let train_records = synth_generate(spec, 1000, 7)?;
    let dev = synth_generate(spec, 200, 8)?;
    let config = TrainConfig { episodes: 1000, checkpoint_every: 250, ..TrainConfig::default() };
    let dialogue = DialogueConfig::default();
    let rewards = RewardConfig::default();
    let agent = Agent::initialize(&catalog, &train_records, 0, config.seed)?;
    let out = train(agent, &train_records, &dev, &dialogue, &rewards, &config, None)?;
    Ok(Checkpoint::new(catalog, out.best, dialogue, config, rewards, out.best_episode))
}

fn main() -> bayes_inquiry::Result<()> {
    let spec = SyntheticSpec::signature(3, 9, 2, 0.9, 0.05);
    let dev = synth_generate(&spec, 200, 8)?;
    let first = run(&spec)?;
    let path = std::env::temp_dir().join("bayes-inquiry-example-checkpoint.json");
    first.save(&path)?;
    let loaded = Checkpoint::load(&path)?;
    println!("saved {} (episode {}, hash {})", path.display(), loaded.episode, loaded.content_hash()?);
    let a = evaluate(&first.agent.model, &dev, &first.dialogue)?;
    let b = evaluate(&loaded.agent.model, &dev, &loaded.dialogue)?;
    println!("{a}");
    println!("reloaded evaluation identical: {}", a == b);
    println!("second run identical: {}", run(&spec)?.to_json()? == first.to_json()?);
    Ok(())
}
