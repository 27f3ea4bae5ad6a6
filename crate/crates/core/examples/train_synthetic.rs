//! Generate a well-separated synthetic population, train the agent with
//! actor-critic, and compare it with the full-evidence Bayes classifier.
//!
//! ```text
//! cargo run --release -p bayes-inquiry --example train_synthetic -- [episodes]
//! ```

use std::time::Instant;

use bayes_inquiry::data::{synth_generate, SyntheticSpec};
use bayes_inquiry::dialogue::DialogueConfig;
use bayes_inquiry::eval::{evaluate, oracle_full_evidence_accuracy, true_network};
use bayes_inquiry::simulator::RewardConfig;
use bayes_inquiry::training::{train, Agent, TrainConfig};

fn main() -> bayes_inquiry::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let spec = SyntheticSpec::signature(4, 12, 2, 0.9, 0.05);
    let catalog = spec.catalog()?;
    let train_records = synth_generate(&spec, 4000, 7)?;
    let dev_records = synth_generate(&spec, 1000, 8)?;

    let (graph, params) = true_network(&spec);
    println!("bayes-optimal full-evidence accuracy: {:.4}", oracle_full_evidence_accuracy(&params, &graph, &dev_records)?);

    let config = TrainConfig { episodes, ..TrainConfig::default() };
    let dialogue = DialogueConfig::default();
    let agent = Agent::initialize(&catalog, &train_records, config.edge_threshold, config.seed)?;
    println!("untrained:\n{}\n", evaluate(&agent.model, &dev_records, &dialogue)?);

    let started = Instant::now();
    let out = train(agent, &train_records, &dev_records, &dialogue, &RewardConfig::default(), &config, None)?;
    for e in &out.log {
        println!(
            "episode {:>6}  reward {:>10.2}  acc {:.3}  recall {:.3}  mu {:.3}  turns {:.2}",
            e.episode, e.cumulative_reward, e.dev_accuracy, e.dev_recall, e.mean_mu, e.mean_turns
        );
    }
    println!("\nbest (episode {}):\n{}", out.best_episode, out.best_summary);
    println!("trained in {:.1?}", started.elapsed());
    Ok(())
}
