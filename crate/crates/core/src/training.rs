//! Advantage actor-critic training of the whole dialogue manager.
//!
//! The actor is everything that shapes `pi(a | s)`: the Bayes-net logits and
//! the switcher weights. The critic is a separate MLP over the state vector.
//! With `delta_t = r_t + gamma * v(s_{t+1}) - v(s_t)` and `v(terminal) = 0`,
//! one update over an episode is
//!
//! ```text
//! actor  += sum_t beta1 * delta_t * grad ln pi(a_t | s_t) + beta2 * grad H(pi(. | s_t))
//! critic += sum_t alpha * delta_t * grad v(s_t)
//! ```
//!
//! Every `delta_t` is computed with the critic as it was before the update
//! and treated as a constant in the actor gradient.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bayesnet::{build_graph, init_params};
use crate::data::{count, Catalog, PatientRecord};
use crate::dialogue::{step, Action, DialogueConfig, DialogueModel, Mode, SymptomState, TurnGraph, TurnTrace};
use crate::diffcore::Tape;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalSummary};
use crate::inquiry::{new_switcher, InquiryMatrices};
use crate::nn::Mlp;
use crate::params::{accumulate, apply_step, Binder, GradMap, Net, ParamKey, Parameterized};
use crate::simulator::{reset, respond, RewardConfig};

pub const CRITIC_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub gamma: f64,
    /// Critic learning rate.
    pub alpha: f64,
    /// Actor learning rate.
    pub beta1: f64,
    /// Entropy coefficient.
    pub beta2: f64,
    pub episodes: u64,
    pub seed: u64,
    /// Evaluate on the dev split every this many episodes.
    pub checkpoint_every: u64,
    /// Co-occurrence count an edge must exceed.
    pub edge_threshold: u64,
    /// Episodes rolled out against one parameter snapshot before their
    /// updates are applied. 1 is the sequential reference mode.
    pub rollout_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            alpha: 1e-3,
            beta1: 1e-3,
            beta2: 1e-2,
            episodes: 20_000,
            seed: 7,
            checkpoint_every: 500,
            edge_threshold: 0,
            rollout_batch: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Validation("gamma must lie in [0, 1)".into()));
        }
        if self.alpha < 0.0 || self.beta1 < 0.0 || self.beta2 < 0.0 {
            return Err(Error::Validation("learning rates must be non-negative".into()));
        }
        if self.checkpoint_every == 0 || self.rollout_batch == 0 {
            return Err(Error::Validation("checkpoint_every and rollout_batch must be positive".into()));
        }
        Ok(())
    }
}

/// Actor (dialogue model) plus critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub model: DialogueModel,
    pub critic: Mlp,
}

impl Agent {
    /// Builds the network, its initial parameters and the inquiry matrices
    /// from training records; MLP weights are drawn from `seed`.
    pub fn initialize(catalog: &Catalog, records: &[PatientRecord], edge_threshold: u64, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Initialization("no training records".into()));
        }
        let counts = count(records, catalog);
        let graph = build_graph(&counts, edge_threshold);
        let bayes = init_params(&counts, &graph)?;
        let matrices = InquiryMatrices::from_counts(&counts);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (catalog.num_diseases(), catalog.num_symptoms());
        let switcher = new_switcher(n, m, &mut rng);
        let critic = Mlp::new(Net::Critic, n, CRITIC_WIDTH, &mut rng);
        Ok(Self { model: DialogueModel { graph, bayes, matrices, switcher }, critic })
    }

    pub fn value(&self, state: &SymptomState) -> f64 {
        self.critic.forward(&state.as_reals())
    }
}

impl Parameterized for Agent {
    fn get(&self, key: &ParamKey) -> Option<f64> {
        match key.net() {
            Some(Net::Critic) => self.critic.get(key),
            _ => self.model.get(key),
        }
    }

    fn get_mut(&mut self, key: &ParamKey) -> Option<&mut f64> {
        match key.net() {
            Some(Net::Critic) => self.critic.get_mut(key),
            _ => self.model.get_mut(key),
        }
    }

    fn keys(&self) -> Vec<ParamKey> {
        let mut keys = self.model.keys();
        keys.extend(self.critic.keys());
        keys
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: SymptomState,
    pub action: Action,
    pub log_prob: f64,
    pub entropy: f64,
    pub reward: f64,
    /// `None` after the diagnosis.
    pub next_state: Option<SymptomState>,
}

#[derive(Debug, Clone)]
pub struct Episode {
    pub transitions: Vec<Transition>,
    pub traces: Vec<TurnTrace>,
    pub graphs: Vec<TurnGraph>,
    /// State after the last answer.
    pub final_state: SymptomState,
    pub diagnosis: usize,
    pub correct: bool,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    pub fn queries(&self) -> impl Iterator<Item = usize> + '_ {
        self.transitions.iter().filter_map(|t| match t.action {
            Action::Query(j) => Some(j),
            Action::Diagnose(_) => None,
        })
    }
}

/// Plays one consultation against the simulator.
pub fn run_episode(
    model: &DialogueModel,
    record: &PatientRecord,
    config: &DialogueConfig,
    rewards: &RewardConfig,
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<Episode> {
    let mut env = reset(record, model.num_symptoms());
    let mut transitions = Vec::new();
    let mut traces = Vec::new();
    let mut graphs = Vec::new();
    loop {
        let s = step(&env.state, model, config, mode, rng)?;
        let before = env.state.clone();
        let response = respond(&mut env, s.action, rewards)?;
        transitions.push(Transition {
            state: before,
            action: s.action,
            log_prob: s.graph.tape.value(s.graph.log_prob),
            entropy: s.graph.tape.value(s.graph.entropy),
            reward: response.reward,
            next_state: (!response.done).then(|| env.state.clone()),
        });
        traces.push(s.trace);
        graphs.push(s.graph);
        if let Action::Diagnose(d) = s.action {
            return Ok(Episode {
                transitions,
                traces,
                graphs,
                final_state: env.state,
                diagnosis: d,
                correct: d == record.disease,
            });
        }
    }
}

/// `r + gamma * v(next) - v(current)`, with a terminal next state worth 0.
pub fn td_error(transition: &Transition, critic: &Mlp, gamma: f64) -> f64 {
    let next = transition.next_state.as_ref().map_or(0.0, |s| critic.forward(&s.as_reals()));
    transition.reward + gamma * next - critic.forward(&transition.state.as_reals())
}

/// Gradient of `v(state)` with respect to the critic weights.
pub fn critic_gradient(critic: &Mlp, state: &SymptomState) -> Result<GradMap> {
    let mut tape = Tape::new();
    let mut binder = Binder::new();
    let inputs: Vec<_> = state.as_reals().into_iter().map(|v| tape.constant(v)).collect();
    let v = critic.forward_tape(&mut tape, &mut binder, &inputs);
    Ok(binder.gradients(&tape.backward(v)?))
}

/// Gradient of `ln pi(a_t | s_t)` for one recorded turn.
pub fn log_prob_gradient(graph: &TurnGraph) -> Result<GradMap> {
    Ok(graph.binder.gradients(&graph.tape.backward(graph.log_prob)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_td_error: f64,
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
}

/// Ascent directions for one episode, already scaled by the learning rates.
#[derive(Debug, Clone, Default)]
pub struct EpisodeGradients {
    pub actor: GradMap,
    pub critic: GradMap,
    pub stats: UpdateStats,
}

pub fn episode_gradients(episode: &Episode, critic: &Mlp, config: &TrainConfig) -> Result<EpisodeGradients> {
    if episode.transitions.is_empty() {
        return Err(Error::Contract("empty trajectory".into()));
    }
    let mut out = EpisodeGradients::default();
    let mut td_sum = 0.0;
    for (t, graph) in episode.transitions.iter().zip(&episode.graphs) {
        let delta = td_error(t, critic, config.gamma);
        td_sum += delta;
        if config.beta1 != 0.0 || config.beta2 != 0.0 {
            let mut tape = graph.tape.clone();
            let weighted_lp = tape.scale(graph.log_prob, config.beta1 * delta);
            let weighted_h = tape.scale(graph.entropy, config.beta2);
            let objective = tape.add(weighted_lp, weighted_h);
            let grads = graph.binder.gradients(&tape.backward(objective)?);
            accumulate(&mut out.actor, &grads, 1.0);
        }
        if config.alpha != 0.0 {
            accumulate(&mut out.critic, &critic_gradient(critic, &t.state)?, config.alpha * delta);
        }
    }
    for (name, grads) in [("actor", &out.actor), ("critic", &out.critic)] {
        if let Some((k, g)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Numerical(format!("non-finite {name} gradient {g} for {k:?}")));
        }
    }
    let norm = |g: &GradMap| g.values().map(|x| x * x).sum::<f64>().sqrt();
    out.stats = UpdateStats {
        mean_td_error: td_sum / episode.transitions.len() as f64,
        actor_grad_norm: norm(&out.actor),
        critic_grad_norm: norm(&out.critic),
    };
    Ok(out)
}

fn apply_nonzero(agent: &mut Agent, grads: &GradMap) {
    let nonzero: GradMap = grads.iter().filter(|(_, g)| **g != 0.0).map(|(k, g)| (*k, *g)).collect();
    apply_step(agent, &nonzero, 1.0);
}

/// One A2C update from a finished episode.
pub fn update(episode: &Episode, agent: &mut Agent, config: &TrainConfig) -> Result<UpdateStats> {
    let grads = episode_gradients(episode, &agent.critic, config)?;
    apply_nonzero(agent, &grads.actor);
    apply_nonzero(agent, &grads.critic);
    Ok(grads.stats)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub episode: u64,
    pub cumulative_reward: f64,
    pub dev_accuracy: f64,
    pub dev_recall: f64,
    pub mean_mu: f64,
    pub mean_turns: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Agent with the best dev score seen, including the initial one.
    pub best: Agent,
    pub best_episode: u64,
    pub best_summary: EvalSummary,
    /// Agent after the last episode.
    pub last: Agent,
    pub log: Vec<LogEntry>,
}

fn episode_rng(seed: u64, episode: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode + 1);
    rng
}

fn better(a: &EvalSummary, b: &EvalSummary) -> bool {
    (a.accuracy, a.recall) > (b.accuracy, b.recall)
}

/// Trains from `agent` for `config.episodes` episodes, evaluating greedily
/// on `dev` every `checkpoint_every` episodes. Log lines are also written
/// as JSON to `log_sink` when given.
pub fn train(
    mut agent: Agent,
    train_records: &[PatientRecord],
    dev_records: &[PatientRecord],
    dialogue: &DialogueConfig,
    rewards: &RewardConfig,
    config: &TrainConfig,
    mut log_sink: Option<&mut dyn Write>,
) -> Result<TrainOutcome> {
    config.validate()?;
    dialogue.validate()?;
    rewards.validate()?;
    if train_records.is_empty() || dev_records.is_empty() {
        return Err(Error::Validation("train and dev splits must both be non-empty".into()));
    }
    let mut log = Vec::new();
    let mut cumulative = 0.0;
    let mut record_eval = |agent: &Agent, episode: u64, cumulative: f64, log: &mut Vec<LogEntry>| -> Result<EvalSummary> {
        let summary = evaluate(&agent.model, dev_records, dialogue)?;
        let entry = LogEntry {
            episode,
            cumulative_reward: cumulative,
            dev_accuracy: summary.accuracy,
            dev_recall: summary.recall,
            mean_mu: summary.mean_mu_per_turn,
            mean_turns: summary.mean_turns,
        };
        if let Some(sink) = log_sink.as_deref_mut() {
            let line = serde_json::to_string(&entry)?;
            writeln!(sink, "{line}").map_err(|e| Error::io(std::path::Path::new("<training log>"), e))?;
        }
        log.push(entry);
        Ok(summary)
    };

    let mut best_summary = record_eval(&agent, 0, cumulative, &mut log)?;
    let mut best = agent.clone();
    let mut best_episode = 0;
    let mut episode = 0u64;
    while episode < config.episodes {
        let batch = (config.rollout_batch as u64).min(config.episodes - episode);
        let snapshot = &agent.model;
        let rollouts: Vec<Result<Episode>> = if batch == 1 {
            vec![rollout(snapshot, train_records, dialogue, rewards, config.seed, episode)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = (episode..episode + batch)
                    .map(|e| scope.spawn(move || rollout(snapshot, train_records, dialogue, rewards, config.seed, e)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("rollout thread panicked")).collect()
            })
        };
        for ep in rollouts {
            let ep = ep?;
            cumulative += ep.total_reward();
            update(&ep, &mut agent, config)?;
            episode += 1;
            if episode.is_multiple_of(config.checkpoint_every) || episode == config.episodes {
                let summary = record_eval(&agent, episode, cumulative, &mut log)?;
                if better(&summary, &best_summary) {
                    best_summary = summary;
                    best = agent.clone();
                    best_episode = episode;
                }
            }
        }
    }
    Ok(TrainOutcome { best, best_episode, best_summary, last: agent, log })
}

fn rollout(
    model: &DialogueModel,
    records: &[PatientRecord],
    dialogue: &DialogueConfig,
    rewards: &RewardConfig,
    seed: u64,
    episode: u64,
) -> Result<Episode> {
    let mut rng = episode_rng(seed, episode);
    let record = &records[rng.gen_range(0..records.len())];
    run_episode(model, record, dialogue, rewards, Mode::Stochastic, &mut rng)
}
