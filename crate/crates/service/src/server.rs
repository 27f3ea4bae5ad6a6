//! HTTP session API. Every response carries the full per-turn explanation
//! history; errors use a `{code, message, details}` envelope.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

use bayes_inquiry::checkpoint::Checkpoint;
use bayes_inquiry::dialogue::{DialogueConfig, Explanation};

use crate::consultation::{ConsultError, Consultation, Status};

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(30 * 60);
const SUGGESTIONS: usize = 3;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Stop rule for served consultations; defaults to the checkpoint's.
    pub dialogue: Option<DialogueConfig>,
    pub session_ttl: Duration,
    /// Directory served at `/`. A built-in index page is used when absent.
    pub static_dir: Option<PathBuf>,
    /// Sessions are mirrored to this JSON file and restored on startup.
    pub sessions_file: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { dialogue: None, session_ttl: DEFAULT_SESSION_TTL, static_dir: None, sessions_file: None }
    }
}

struct LoadedModel {
    checkpoint: Checkpoint,
    hash: String,
    dialogue: DialogueConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Session {
    consultation: Consultation,
    created_ms: u64,
    last_active_ms: u64,
}

type SessionMap = HashMap<String, Arc<Mutex<Session>>>;

pub struct AppState {
    model: Option<LoadedModel>,
    ttl_ms: u64,
    sessions: std::sync::Mutex<SessionMap>,
    persisted: Option<(PathBuf, std::sync::Mutex<BTreeMap<String, Session>>)>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl AppState {
    /// `checkpoint = None` runs the service in a degraded mode where session
    /// creation answers 503.
    pub fn new(checkpoint: Option<Checkpoint>, config: &ServiceConfig) -> anyhow::Result<Arc<Self>> {
        let model = match checkpoint {
            Some(checkpoint) => {
                let dialogue = config.dialogue.unwrap_or(checkpoint.dialogue);
                dialogue.validate()?;
                Some(LoadedModel { hash: checkpoint.content_hash()?, checkpoint, dialogue })
            }
            None => None,
        };
        let mut sessions = SessionMap::new();
        let persisted = match &config.sessions_file {
            Some(path) => {
                let restored = read_sessions(path)?;
                for (id, s) in &restored {
                    sessions.insert(id.clone(), Arc::new(Mutex::new(s.clone())));
                }
                Some((path.clone(), std::sync::Mutex::new(restored)))
            }
            None => None,
        };
        Ok(Arc::new(Self {
            model,
            ttl_ms: config.session_ttl.as_millis() as u64,
            sessions: std::sync::Mutex::new(sessions),
            persisted,
        }))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id:?}")))
    }

    fn model(&self) -> Result<&LoadedModel, ApiError> {
        self.model.as_ref().ok_or_else(|| {
            ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "model_unavailable", "no checkpoint is loaded")
        })
    }

    fn touch_expiry(&self, session: &mut Session, now: u64) -> bool {
        if session.consultation.status != Status::Expired && now.saturating_sub(session.last_active_ms) > self.ttl_ms {
            session.consultation.expire();
            return true;
        }
        false
    }

    /// Marks every session idle for longer than the TTL as expired. Sessions
    /// currently being answered are skipped. Returns how many expired.
    pub fn expire_idle(&self, now: u64) -> usize {
        let all: Vec<(String, Arc<Mutex<Session>>)> =
            self.sessions.lock().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut expired = 0;
        for (id, s) in all {
            if let Ok(mut s) = s.try_lock() {
                if self.touch_expiry(&mut s, now) {
                    self.persist(&id, &s);
                    expired += 1;
                }
            }
        }
        expired
    }

    fn persist(&self, id: &str, session: &Session) {
        let Some((path, map)) = &self.persisted else { return };
        let mut map = map.lock().unwrap();
        map.insert(id.to_string(), session.clone());
        if let Err(e) = write_sessions(path, &map) {
            tracing::warn!("could not persist sessions to {}: {e}", path.display());
        }
    }
}

fn read_sessions(path: &Path) -> anyhow::Result<BTreeMap<String, Session>> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(serde_json::from_str(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
        Err(e) => Err(e.into()),
    }
}

fn write_sessions(path: &Path, sessions: &BTreeMap<String, Session>) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(sessions)?)?;
    std::fs::rename(tmp, path)?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), details: Value::Null }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "details": self.details });
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), "invalid_body", r.body_text())
    }
}

impl From<ConsultError> for ApiError {
    fn from(e: ConsultError) -> Self {
        match e {
            ConsultError::NoSymptoms | ConsultError::UnknownSymptom(_) => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_symptoms", e.to_string())
            }
            ConsultError::NotAwaiting(Status::Expired) => {
                ApiError::new(StatusCode::GONE, "session_expired", "the session expired after inactivity")
            }
            ConsultError::NotAwaiting(_) => {
                ApiError::new(StatusCode::CONFLICT, "session_closed", "the consultation already ended in a diagnosis")
            }
            ConsultError::Engine(e) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_error", e.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    /// Self-reported symptoms by catalog name.
    pub symptoms: BTreeMap<String, bool>,
}

#[derive(Debug, Deserialize)]
pub struct AnswerRequest {
    pub answer: bool,
    /// When given, the answer is only accepted if the session is still at
    /// this turn.
    pub turn: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Question {
    pub symptom: String,
    pub index: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportView {
    pub disease: String,
    pub disease_index: usize,
    pub confidence: f64,
    pub supporting_symptoms: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: Status,
    pub turn: u32,
    pub question: Option<Question>,
    /// Symptoms known so far, by name.
    pub known: BTreeMap<String, bool>,
    pub report: Option<ReportView>,
    /// One explanation per completed turn, oldest first.
    pub history: Vec<Explanation>,
}

fn view(id: &str, c: &Consultation, ck: &Checkpoint) -> SessionView {
    let names = &ck.catalog.symptoms;
    let known = c
        .state
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| i8::from(**v) != 0)
        .map(|(j, v)| (names[j].clone(), i8::from(*v) > 0))
        .collect();
    SessionView {
        id: id.to_string(),
        status: c.status,
        turn: c.state.turn,
        question: c.pending.map(|j| Question { symptom: names[j].clone(), index: j }),
        known,
        report: c.report.as_ref().map(|r| ReportView {
            disease: ck.catalog.diseases[r.disease].clone(),
            disease_index: r.disease,
            confidence: r.confidence,
            supporting_symptoms: r.supporting_symptoms.iter().map(|&j| names[j].clone()).collect(),
        }),
        history: c.explanations(ck),
    }
}

fn suggestions<'a>(name: &str, catalog: impl Iterator<Item = &'a String>) -> Vec<String> {
    let needle = name.to_lowercase();
    let mut scored: Vec<(f64, &String)> =
        catalog.map(|s| (strsim::jaro_winkler(&needle, &s.to_lowercase()), s)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(SUGGESTIONS).map(|(_, s)| s.clone()).collect()
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let model = app.model()?;
    let Json(body) = body?;
    if body.symptoms.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_symptoms", "report at least one symptom"));
    }
    let catalog = &model.checkpoint.catalog;
    let mut initial = BTreeMap::new();
    let mut unknown = Vec::new();
    for (name, &value) in &body.symptoms {
        match catalog.symptom_index(name) {
            Some(j) => {
                initial.insert(j, value);
            }
            None => unknown.push(json!({ "name": name, "candidates": suggestions(name, catalog.symptoms.iter()) })),
        }
    }
    if !unknown.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_symptom", "some symptom names are not in the catalog")
            .with_details(json!({ "unknown": unknown })));
    }
    let consultation = Consultation::start(&model.checkpoint, &model.dialogue, &initial)?;
    let id = uuid::Uuid::new_v4().to_string();
    let now = now_ms();
    let session = Session { consultation, created_ms: now, last_active_ms: now };
    let out = view(&id, &session.consultation, &model.checkpoint);
    app.persist(&id, &session);
    app.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn answer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let model = app.model()?;
    let Json(body) = body?;
    let handle = app.session(&id)?;
    let Ok(mut session) = handle.try_lock() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "session_busy", "another answer for this session is in progress"));
    };
    let now = now_ms();
    if app.touch_expiry(&mut session, now) {
        app.persist(&id, &session);
    }
    let current = session.consultation.state.turn;
    if session.consultation.status == Status::AwaitingAnswer && body.turn.is_some_and(|t| t != current) {
        return Err(ApiError::new(StatusCode::CONFLICT, "stale_turn", "the session has moved past that turn")
            .with_details(json!({ "expected": current, "got": body.turn })));
    }
    session.consultation.answer(&model.checkpoint, &model.dialogue, body.answer)?;
    session.last_active_ms = now;
    app.persist(&id, &session);
    Ok(Json(view(&id, &session.consultation, &model.checkpoint)))
}

async fn read_session<'a>(app: &'a AppState, id: &str) -> Result<(Consultation, &'a LoadedModel), ApiError> {
    let model = app.model()?;
    let handle = app.session(id)?;
    let mut session = handle.lock().await;
    if app.touch_expiry(&mut session, now_ms()) {
        app.persist(id, &session);
    }
    Ok((session.consultation.clone(), model))
}

async fn get_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<SessionView>, ApiError> {
    let (c, model) = read_session(&app, &id).await?;
    Ok(Json(view(&id, &c, &model.checkpoint)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplainView {
    pub id: String,
    pub status: Status,
    /// Explanation of the most recent turn.
    pub latest: Explanation,
    pub history: Vec<Explanation>,
}

async fn explain_session(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ExplainView>, ApiError> {
    let (c, model) = read_session(&app, &id).await?;
    let history = c.explanations(&model.checkpoint);
    let latest = history.last().cloned().expect("a session always has its first turn");
    Ok(Json(ExplainView { id, status: c.status, latest, history }))
}

async fn catalog(State(app): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let model = app.model()?;
    let c = &model.checkpoint.catalog;
    Ok(Json(json!({ "diseases": c.diseases, "symptoms": c.symptoms })))
}

async fn model_meta(State(app): State<Arc<AppState>>) -> Result<Json<Value>, ApiError> {
    let model = app.model()?;
    Ok(Json(json!({
        "checkpoint_hash": model.hash,
        "confidence_threshold": model.dialogue.confidence_threshold,
        "max_turns": model.dialogue.max_turns,
        "episode": model.checkpoint.episode,
        "seed": model.checkpoint.seed,
        "num_diseases": model.checkpoint.catalog.num_diseases(),
        "num_symptoms": model.checkpoint.catalog.num_symptoms(),
    })))
}

const INDEX: &str = "<!doctype html><title>inquiry</title><h1>Symptom inquiry service</h1>\
<p>Endpoints: <code>POST /api/sessions</code>, <code>POST /api/sessions/{id}/answer</code>, \
<code>GET /api/sessions/{id}</code>, <code>GET /api/sessions/{id}/explain</code>, \
<code>GET /api/catalog</code>, <code>GET /api/model/meta</code>.</p>";

pub fn router(app: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/:id", get(get_session))
        .route("/api/sessions/:id/answer", post(answer))
        .route("/api/sessions/:id/explain", get(explain_session))
        .route("/api/catalog", get(catalog))
        .route("/api/model/meta", get(model_meta))
        .with_state(app);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX) })),
    }
}

/// Serves until the process is stopped, sweeping idle sessions once a
/// minute.
pub async fn serve(checkpoint: Checkpoint, config: ServiceConfig, port: u16) -> anyhow::Result<()> {
    let app = AppState::new(Some(checkpoint), &config)?;
    let sweeper = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.expire_idle(now_ms());
            if n > 0 {
                tracing::info!("expired {n} idle sessions");
            }
        }
    });
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app, config.static_dir.as_deref())).await?;
    Ok(())
}
