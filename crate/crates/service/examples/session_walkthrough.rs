//! Drive the HTTP session API in-process: start a consultation, answer every
//! question from a simulated patient record, then fetch the explanation.
//! With `--listen <port>` the same router is served over TCP instead.
//!
//! ```text
//! cargo run -p bayes-inquiry-service --example session_walkthrough
//! ```

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::data::{synth_generate, SyntheticSpec};
use bayes_inquiry::dialogue::DialogueConfig;
use bayes_inquiry::simulator::RewardConfig;
use bayes_inquiry::training::{train, Agent, TrainConfig};
use bayes_inquiry_service::server::{router, serve, AppState, ServiceConfig};

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> anyhow::Result<Value> {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))?;
    let resp = app.clone().oneshot(req).await?;
    println!("{method} {uri} -> {}", resp.status());
    Ok(serde_json::from_slice(&resp.into_body().collect().await?.to_bytes())?)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let spec = SyntheticSpec::signature(4, 12, 2, 0.9, 0.05);
    let catalog = spec.catalog()?;
    let records = synth_generate(&spec, 2000, 7)?;
    let dev = synth_generate(&spec, 200, 8)?;
    let config = TrainConfig { episodes: 2000, ..TrainConfig::default() };
    let dialogue = DialogueConfig::default();
    let agent = Agent::initialize(&catalog, &records, 0, config.seed)?;
    let out = train(agent, &records, &dev, &dialogue, &RewardConfig::default(), &config, None)?;
    let checkpoint = Checkpoint::new(catalog.clone(), out.best, dialogue, config, RewardConfig::default(), out.best_episode);

    let args: Vec<String> = std::env::args().collect();
    if let Some(port) = args.iter().position(|a| a == "--listen").and_then(|i| args.get(i + 1)) {
        return serve(checkpoint, ServiceConfig::default(), port.parse()?).await;
    }

    let app = router(AppState::new(Some(checkpoint), &ServiceConfig::default())?, None);
    let patient = &dev[0];
    let reported: serde_json::Map<String, Value> =
        patient.explicit.iter().map(|(&j, &v)| (catalog.symptoms[j].clone(), json!(v))).collect();
    let mut session = call(&app, "POST", "/api/sessions", Some(json!({ "symptoms": reported }))).await?;
    let id = session["id"].as_str().unwrap_or_default().to_string();
    while session["status"] == "awaiting_answer" {
        let j = session["question"]["index"].as_u64().unwrap_or_default() as usize;
        let answer = patient.is_positive(j);
        println!("  asked {} -> {answer}", session["question"]["symptom"]);
        let body = json!({ "answer": answer, "turn": session["turn"] });
        session = call(&app, "POST", &format!("/api/sessions/{id}/answer"), Some(body)).await?;
    }
    println!("report: {}", serde_json::to_string_pretty(&session["report"])?);
    println!("true disease: {}", catalog.diseases[patient.disease]);
    let explained = call(&app, "GET", &format!("/api/sessions/{id}/explain"), None).await?;
    println!("latest turn: {}", serde_json::to_string_pretty(&explained["latest"])?);
    Ok(())
}
