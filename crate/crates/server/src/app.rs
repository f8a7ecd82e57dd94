//! HTTP+JSON chat service.
//!
//! Sessions live in memory; every acknowledged turn is in the store. A
//! message is answered on a copy of the session, the new turns are written
//! in one atomic batch, and only then is the copy committed, so a storage
//! failure leaves both the store and the live session untouched.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use selftalk_core::dialogue_manager::{Component, Engine, SessionState};
use selftalk_core::store::{ConversationRecord, Store};
use selftalk_core::Error as CoreError;
use tokio::sync::Mutex as SessionLock;

pub struct AppState {
    engine: Arc<Engine>,
    store: Arc<dyn Store>,
    sessions: Mutex<HashMap<String, Arc<SessionLock<SessionState>>>>,
    seed: Option<u64>,
}

impl AppState {
    /// `seed` fixes every session's random stream; `None` draws one per session.
    pub fn new(engine: Arc<Engine>, store: Arc<dyn Store>, seed: Option<u64>) -> Self {
        Self {
            engine,
            store,
            sessions: Mutex::new(HashMap::new()),
            seed,
        }
    }

    pub fn store(&self) -> &Arc<dyn Store> {
        &self.store
    }

    fn session(&self, id: &str) -> Option<Arc<SessionLock<SessionState>>> {
        self.sessions.lock().expect("session map poisoned").get(id).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionCreated {
    pub session_id: String,
    pub greeting: String,
    pub component: Component,
    pub topic: Option<String>,
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatRequest {
    #[serde(default)]
    pub session_id: Option<String>,
    pub utterance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChatResponse {
    pub session_id: String,
    pub reply: String,
    pub component: Component,
    /// Present only on matching-score replies.
    pub confidence: Option<f64>,
    pub topic: Option<String>,
    /// Transcript position of the reply; the greeting is turn 0.
    pub turn: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("session `{id}` not found"))
    }

    fn storage(e: CoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, format!("storage failure: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/transcript", get(transcript))
        .with_state(state)
}

async fn create_session(State(app): State<Arc<AppState>>) -> Result<(StatusCode, Json<SessionCreated>), ApiError> {
    let id = uuid::Uuid::new_v4().to_string();
    let seed = app.seed.unwrap_or_else(|| rand::rng().next_u64());
    let session = app.engine.start_session(id.clone(), seed);
    app.store
        .save_turns(&id, &session.turn_records(0))
        .map_err(ApiError::storage)?;
    let body = SessionCreated {
        session_id: id.clone(),
        greeting: session.transcript[0].raw.clone(),
        component: Component::StartMessage,
        topic: session.current_topic.clone(),
        turn: 0,
    };
    app.sessions
        .lock()
        .expect("session map poisoned")
        .insert(id, Arc::new(SessionLock::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn post_message(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<ChatRequest>, JsonRejection>,
) -> Result<Json<ChatResponse>, ApiError> {
    let Json(req) = body?;
    if req.session_id.as_deref().is_some_and(|s| s != id) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "sessionId does not match the path"));
    }
    let lock = app.session(&id).ok_or_else(|| ApiError::not_found(&id))?;
    if req.utterance.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "utterance is empty"));
    }
    let mut live = lock.lock().await;
    let mut next = live.clone();
    let from = next.transcript.len();
    let reply = app
        .engine
        .respond(&mut next, &req.utterance)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
    app.store
        .save_turns(&id, &next.turn_records(from))
        .map_err(ApiError::storage)?;
    *live = next;
    Ok(Json(ChatResponse {
        session_id: id,
        reply: reply.text,
        confidence: reply.confidence.filter(|_| reply.component == Component::MatchingScore),
        component: reply.component,
        topic: live.current_topic.clone(),
        turn: live.transcript.len() - 1,
    }))
}

async fn transcript(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<ConversationRecord>, ApiError> {
    match app.store.load_session(&id) {
        Ok(record) => Ok(Json(record)),
        Err(CoreError::NotFound(_) | CoreError::InvalidArgument(_)) => Err(ApiError::not_found(&id)),
        Err(e) => Err(ApiError::storage(e)),
    }
}
