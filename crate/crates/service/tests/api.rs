//! Session API behaviour through the router, without a network listener.

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};
use tower::ServiceExt;

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::data::{synth_generate, SyntheticSpec};
use bayes_inquiry::dialogue::DialogueConfig;
use bayes_inquiry::simulator::RewardConfig;
use bayes_inquiry::training::{Agent, TrainConfig};
use bayes_inquiry_service::server::{router, AppState, ServiceConfig};

fn checkpoint() -> Checkpoint {
    let spec = SyntheticSpec::signature(3, 8, 2, 0.9, 0.05);
    let catalog = spec.catalog().unwrap();
    let records = synth_generate(&spec, 300, 1).unwrap();
    let agent = Agent::initialize(&catalog, &records, 0, 1).unwrap();
    let dialogue = DialogueConfig { confidence_threshold: 0.999, max_turns: 5 };
    Checkpoint::new(catalog, agent, dialogue, TrainConfig::default(), RewardConfig::default(), 0)
}

fn app_with(config: ServiceConfig) -> (Arc<AppState>, Router) {
    let state = AppState::new(Some(checkpoint()), &config).unwrap();
    (state.clone(), router(state, config.static_dir.as_deref()))
}

fn app() -> Router {
    app_with(ServiceConfig::default()).1
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or_else(Body::empty, |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn start(app: &Router) -> Value {
    let (status, body) = call(app, "POST", "/api/sessions", Some(json!({"symptoms": {"symptom_0": true}}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

fn assert_envelope(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].is_string());
    assert!(body.get("details").is_some());
}

#[tokio::test]
async fn session_lifecycle() {
    let app = app();
    let mut s = start(&app).await;
    assert_eq!(s["status"], "awaiting_answer");
    assert_eq!(s["known"], json!({"symptom_0": true}));
    assert_eq!(s["history"].as_array().unwrap().len(), 1);
    let id = s["id"].as_str().unwrap().to_string();
    while s["status"] == "awaiting_answer" {
        let asked = s["question"]["symptom"].as_str().unwrap().to_string();
        let (status, next) = call(&app, "POST", &format!("/api/sessions/{id}/answer"), Some(json!({"answer": true}))).await;
        assert_eq!(status, StatusCode::OK, "{next}");
        assert_eq!(next["known"][&asked], true);
        assert_eq!(next["history"].as_array().unwrap().len(), s["history"].as_array().unwrap().len() + 1);
        s = next;
    }
    assert_eq!(s["status"], "diagnosed");
    assert!(s["history"].as_array().unwrap().len() <= 5);
    assert!(s["report"]["confidence"].as_f64().unwrap() > 0.0);
    assert!(s["question"].is_null());

    let (status, body) = call(&app, "POST", &format!("/api/sessions/{id}/answer"), Some(json!({"answer": false}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_envelope(&body, "session_closed");

    let (status, got) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, s);
    let (status, ex) = call(&app, "GET", &format!("/api/sessions/{id}/explain"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ex["latest"]["action"]["kind"], "diagnose");
    assert_eq!(ex["history"], s["history"]);
}

#[tokio::test]
async fn invalid_creation_requests() {
    let app = app();
    let (status, body) = call(&app, "POST", "/api/sessions", Some(json!({"symptoms": {}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_envelope(&body, "no_symptoms");

    let (status, body) = call(&app, "POST", "/api/sessions", Some(json!({"symptoms": {"symptom_O": true}}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_envelope(&body, "unknown_symptom");
    let unknown = &body["details"]["unknown"][0];
    assert_eq!(unknown["name"], "symptom_O");
    assert_eq!(unknown["candidates"].as_array().unwrap().len(), 3);

    let (status, body) = call(&app, "POST", "/api/sessions", Some(json!({"nope": 1}))).await;
    assert!(status.is_client_error());
    assert_envelope(&body, "invalid_body");
}

#[tokio::test]
async fn unknown_session_and_missing_model() {
    let app = app();
    let (status, body) = call(&app, "GET", "/api/sessions/does-not-exist", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_envelope(&body, "session_not_found");

    let state = AppState::new(None, &ServiceConfig::default()).unwrap();
    let bare = router(state, None);
    let (status, body) = call(&bare, "POST", "/api/sessions", Some(json!({"symptoms": {"symptom_0": true}}))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_envelope(&body, "model_unavailable");
}

#[tokio::test]
async fn catalog_meta_and_index() {
    let app = app();
    let (status, cat) = call(&app, "GET", "/api/catalog", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(cat["symptoms"].as_array().unwrap().len(), 8);
    let (_, meta) = call(&app, "GET", "/api/model/meta", None).await;
    assert_eq!(meta["checkpoint_hash"], checkpoint().content_hash().unwrap());
    assert_eq!(meta["confidence_threshold"], 0.999);
    assert_eq!(meta["max_turns"], 5);
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[tokio::test]
async fn static_directory_is_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>console</p>").unwrap();
    let (_, app) = app_with(ServiceConfig { static_dir: Some(dir.path().to_path_buf()), ..ServiceConfig::default() });
    let resp = app.clone().oneshot(Request::get("/").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(&body[..], b"<p>console</p>");
    let (status, _) = call(&app, "GET", "/api/catalog", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_answers_for_one_turn_admit_exactly_one() {
    let app = app();
    let s = start(&app).await;
    let id = s["id"].as_str().unwrap().to_string();
    let turn = s["turn"].as_u64().unwrap();
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let app = app.clone();
            let uri = format!("/api/sessions/{id}/answer");
            tokio::spawn(async move { call(&app, "POST", &uri, Some(json!({"answer": i % 2 == 0, "turn": turn}))).await })
        })
        .collect();
    let mut ok = 0;
    for t in tasks {
        let (status, body) = t.await.unwrap();
        match status {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT => assert!(body["code"] == "session_busy" || body["code"] == "stale_turn", "{body}"),
            other => panic!("unexpected {other}: {body}"),
        }
    }
    assert_eq!(ok, 1);
    let (_, after) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(after["history"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let (state, app) = app_with(ServiceConfig { session_ttl: Duration::from_millis(1), ..ServiceConfig::default() });
    let s = start(&app).await;
    let id = s["id"].as_str().unwrap().to_string();
    tokio::time::sleep(Duration::from_millis(20)).await;
    let (_, got) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(got["status"], "expired");
    assert!(got["question"].is_null());
    let (status, body) = call(&app, "POST", &format!("/api/sessions/{id}/answer"), Some(json!({"answer": true}))).await;
    assert_eq!(status, StatusCode::GONE);
    assert_envelope(&body, "session_expired");

    let s2 = start(&app).await;
    assert_eq!(state.expire_idle(u64::MAX), 1);
    let (_, got) = call(&app, "GET", &format!("/api/sessions/{}", s2["id"].as_str().unwrap()), None).await;
    assert_eq!(got["status"], "expired");
}

#[tokio::test]
async fn sessions_survive_restart_with_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { sessions_file: Some(dir.path().join("sessions.json")), ..ServiceConfig::default() };
    let (_, app) = app_with(config.clone());
    let s = start(&app).await;
    let id = s["id"].as_str().unwrap().to_string();
    let (_, answered) = call(&app, "POST", &format!("/api/sessions/{id}/answer"), Some(json!({"answer": false}))).await;
    drop(app);

    let (_, restarted) = app_with(config);
    let (status, got) = call(&restarted, "GET", &format!("/api/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(got, answered);
}

/// Random operation sequences never break the session state machine:
/// statuses only move forward, answers are accepted exactly while a question
/// is pending, and the history grows by one turn per accepted answer.
#[tokio::test]
async fn state_machine_property() {
    let app = app();
    for seed in 0..40u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = start(&app).await;
        let id = s["id"].as_str().unwrap().to_string();
        for _ in 0..12 {
            let before_len = s["history"].as_array().unwrap().len();
            match rng.gen_range(0..4) {
                0 | 1 => {
                    let stale = rng.gen_bool(0.2);
                    let turn = s["turn"].as_u64().unwrap() + u64::from(stale);
                    let (status, body) = call(
                        &app,
                        "POST",
                        &format!("/api/sessions/{id}/answer"),
                        Some(json!({"answer": rng.gen_bool(0.5), "turn": turn})),
                    )
                    .await;
                    match (s["status"].as_str().unwrap(), stale) {
                        ("awaiting_answer", false) => {
                            assert_eq!(status, StatusCode::OK, "{body}");
                            assert_eq!(body["history"].as_array().unwrap().len(), before_len + 1);
                            assert_eq!(body["turn"].as_u64(), Some(s["turn"].as_u64().unwrap() + 1));
                            assert_eq!(body["status"] == "awaiting_answer", body["question"].is_object());
                            s = body;
                        }
                        ("awaiting_answer", true) => assert_eq!(body["code"], "stale_turn"),
                        ("diagnosed", _) => assert_eq!(status, StatusCode::CONFLICT),
                        (other, _) => panic!("unexpected status {other}"),
                    }
                }
                2 => {
                    let (_, got) = call(&app, "GET", &format!("/api/sessions/{id}"), None).await;
                    assert_eq!(got, s);
                }
                _ => {
                    let (_, ex) = call(&app, "GET", &format!("/api/sessions/{id}/explain"), None).await;
                    assert_eq!(ex["history"], s["history"]);
                }
            }
            assert!(s["history"].as_array().unwrap().len() <= 5);
            assert_eq!(s["status"] == "diagnosed", s["report"].is_object());
        }
    }
}
