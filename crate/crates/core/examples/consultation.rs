//! Train briefly, then replay greedy consultations against the simulated
//! patient and print the per-turn explanation and the final report.
//!
//! ```text
//! cargo run --release -p bayes-inquiry --example consultation -- [episodes]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bayes_inquiry::data::{synth_generate, SyntheticSpec};
use bayes_inquiry::dialogue::{explain, ActionView, DialogueConfig, Mode};
use bayes_inquiry::eval::report;
use bayes_inquiry::simulator::RewardConfig;
use bayes_inquiry::training::{run_episode, train, Agent, TrainConfig};

fn main() -> bayes_inquiry::Result<()> {
    let episodes = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3000);
    let spec = SyntheticSpec::signature(4, 12, 2, 0.9, 0.05);
    let catalog = spec.catalog()?;
    let train_records = synth_generate(&spec, 2000, 7)?;
    let dev = synth_generate(&spec, 300, 8)?;
    let config = TrainConfig { episodes, ..TrainConfig::default() };
    let dialogue = DialogueConfig::default();
    let agent = Agent::initialize(&catalog, &train_records, 0, config.seed)?;
    let model = train(agent, &train_records, &dev, &dialogue, &RewardConfig::default(), &config, None)?.best.model;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for record in dev.iter().take(3) {
        let reported: Vec<&str> = record.explicit.keys().map(|&j| catalog.symptoms[j].as_str()).collect();
        println!("patient with {} reports {}", catalog.diseases[record.disease], reported.join(", "));
        let ep = run_episode(&model, record, &dialogue, &RewardConfig::default(), Mode::Greedy, &mut rng)?;
        for trace in &ep.traces {
            let e = explain(trace, &catalog, &model.graph);
            let top = &e.top_diseases[0];
            match &e.action {
                ActionView::Query { symptom, index, score, .. } => println!(
                    "  turn {}: leading {} ({:.2}), mu {:.2} [{}] -> ask {symptom} (p {score:.2}): {}",
                    e.turn,
                    top.disease,
                    top.probability,
                    e.mu,
                    e.logic_label,
                    if record.is_positive(*index) { "yes" } else { "no" }
                ),
                ActionView::Diagnose { disease, confidence, stop, .. } => {
                    println!("  turn {}: diagnose {disease} ({confidence:.3}, {stop:?})", e.turn)
                }
            }
        }
        let r = report(ep.traces.last().unwrap(), &ep.final_state, &model.graph)?;
        let support: Vec<&str> = r.supporting_symptoms.iter().map(|&j| catalog.symptoms[j].as_str()).collect();
        println!("  report: {} at {:.3}, supported by {}\n", catalog.diseases[r.disease], r.confidence, support.join(", "));
    }
    Ok(())
}
