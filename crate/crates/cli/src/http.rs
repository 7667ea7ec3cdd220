//! REST surface: GET /schema, /healthz, /catalog/stats; POST /query, /update.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json as AxJson, Router};
use serde_json::{json, Value as Json};

use crate::app::{App, QueryFailure, QueryRequest};

type Shared = State<Arc<App>>;

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/healthz", get(healthz))
        .route("/catalog/stats", get(catalog_stats))
        .route("/query", post(query))
        .route("/update", post(update))
        .with_state(app)
}

fn reply(status: u16, body: Json) -> Response {
    (StatusCode::from_u16(status).expect("valid status"), AxJson(body)).into_response()
}

fn bad_json(e: serde_json::Error) -> Response {
    reply(400, json!({"error": {"kind": "bad_request", "message": format!("malformed JSON: {e}")}}))
}

async fn schema(State(app): Shared) -> Response {
    reply(200, app.schema_json())
}

async fn healthz(State(app): Shared) -> Response {
    let store = app.store.as_store();
    let version = store.snapshot_latest().map(|s| s.version()).ok();
    reply(200, json!({"status": "ok", "store": store.kind(), "version": version, "updates": app.profile.accepts_updates()}))
}

async fn catalog_stats(State(app): Shared) -> Response {
    reply(200, app.catalog_stats())
}

async fn query(State(app): Shared, body: Bytes) -> Response {
    let body: Json = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return bad_json(e),
    };
    let req = match QueryRequest::from_json(&body) {
        Ok(r) => r,
        Err(f) => return reply(f.status(), f.to_json()),
    };
    let result = tokio::task::spawn_blocking(move || app.query(&req)).await;
    match result {
        Ok(Ok(body)) => reply(200, body),
        Ok(Err(f)) => reply(f.status(), f.to_json()),
        Err(e) => {
            let f = QueryFailure::Failed { message: format!("query task failed: {e}"), plan: None };
            reply(500, f.to_json())
        }
    }
}

async fn update(State(app): Shared, body: Bytes) -> Response {
    let body: Json = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return bad_json(e),
    };
    match tokio::task::spawn_blocking(move || app.update(&body)).await {
        Ok(Ok(version)) => reply(200, json!({"version": version})),
        Ok(Err(f)) => reply(f.status(), json!({"error": {"kind": "update", "message": f.message()}})),
        Err(e) => reply(500, json!({"error": {"kind": "update", "message": format!("update task failed: {e}")}})),
    }
}

/// Binds and serves until the process ends. `on_bound` sees the actual
/// address, which matters when the port is 0.
pub async fn serve(app: Arc<App>, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
