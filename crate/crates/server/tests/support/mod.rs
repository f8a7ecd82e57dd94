//! In-process HTTP client over the router.
#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use selftalk_core::dialogue_manager::Engine;
use selftalk_core::fixtures;
use selftalk_core::store::{MemoryStore, Store};
use selftalk_server::app::{router, AppState, ChatResponse, SessionCreated};
use serde_json::Value;
use tower::ServiceExt;

pub fn fixture_app(store: Arc<dyn Store>) -> Router {
    let engine: Arc<Engine> = Arc::new(fixtures::engine().unwrap());
    router(Arc::new(AppState::new(engine, store, Some(fixtures::SCRIPT_SEED))))
}

pub fn memory_app() -> Router {
    fixture_app(Arc::new(MemoryStore::new()))
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

pub async fn create(app: &Router) -> SessionCreated {
    let (status, body) = call(app, Method::POST, "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    serde_json::from_slice(&body).unwrap()
}

pub async fn send(app: &Router, id: &str, utterance: &str) -> (StatusCode, Vec<u8>) {
    call(
        app,
        Method::POST,
        &format!("/sessions/{id}/messages"),
        Some(serde_json::json!({ "sessionId": id, "utterance": utterance })),
    )
    .await
}

pub async fn message(app: &Router, id: &str, utterance: &str) -> ChatResponse {
    let (status, body) = send(app, id, utterance).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

pub async fn transcript(app: &Router, id: &str) -> (StatusCode, Vec<u8>) {
    call(app, Method::GET, &format!("/sessions/{id}/transcript"), None).await
}
