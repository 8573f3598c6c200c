//! HTTP routes.

use std::path::Path as FsPath;
use std::time::Duration;

use a3s::Relation;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;

use crate::error::ApiError;
use crate::manager::SessionManager;
use crate::session::Submitted;
use crate::spec::SessionSpec;

/// Upper bound on any long-poll.
const MAX_WAIT: Duration = Duration::from_secs(60);
/// How long an accepted answer waits for the engine's next move.
const ADVANCE_WAIT: Duration = Duration::from_secs(5);

pub fn router(manager: SessionManager) -> Router {
    Router::new()
        .route("/session", post(create))
        .route("/session/{id}", delete(remove))
        .route("/session/{id}/pending", get(pending))
        .route("/session/{id}/answer", post(answer))
        .route("/session/{id}/status", get(status))
        .route("/session/{id}/log", get(log))
        .route("/session/{id}/asset/{sample}", get(asset))
        .with_state(manager)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed body: {e}")))
}

async fn create(State(manager): State<SessionManager>, body: Bytes) -> Result<Response, ApiError> {
    let spec: SessionSpec = parse_json(&body)?;
    let session = tokio::task::spawn_blocking(move || manager.create(&spec))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    let status = session.status();
    let body = json!({ "id": session.id(), "n": session.len(), "budget": status.progress.budget });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn remove(State(manager): State<SessionManager>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    manager.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
struct WaitParams {
    #[serde(default)]
    wait_ms: u64,
}

async fn pending(
    State(manager): State<SessionManager>,
    Path(id): Path<String>,
    Query(params): Query<WaitParams>,
) -> Result<Response, ApiError> {
    let session = manager.get(&id)?;
    let wait = Duration::from_millis(params.wait_ms).min(MAX_WAIT);
    Ok(match session.wait_pending(wait).await {
        Some(query) => Json(query).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerBody {
    query_id: u64,
    verdict: String,
}

async fn answer(
    State(manager): State<SessionManager>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<serde_json::Value>, ApiError> {
    let session = manager.get(&id)?;
    let body: AnswerBody = parse_json(&body)?;
    let verdict: Relation = body
        .verdict
        .parse()
        .map_err(|_| ApiError::BadRequest(format!("verdict must be `must` or `cannot`, got {:?}", body.verdict)))?;
    let result = match session.submit(body.query_id, verdict)? {
        Submitted::Duplicate => "duplicate",
        Submitted::Accepted => {
            session.wait_advance(body.query_id, ADVANCE_WAIT).await;
            "accepted"
        }
    };
    Ok(Json(json!({
        "result": result,
        "query_id": body.query_id,
        "status": session.status(),
    })))
}

async fn status(State(manager): State<SessionManager>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(manager.get(&id)?.status()).into_response())
}

#[derive(Deserialize)]
struct LogParams {
    n: Option<usize>,
}

async fn log(
    State(manager): State<SessionManager>,
    Path(id): Path<String>,
    Query(params): Query<LogParams>,
) -> Result<Response, ApiError> {
    let session = manager.get(&id)?;
    Ok(Json(session.log_tail(params.n.unwrap_or(50))).into_response())
}

/// Serves the sample's asset file when it exists on disk, its description
/// otherwise.
async fn asset(
    State(manager): State<SessionManager>,
    Path((id, sample)): Path<(String, usize)>,
) -> Result<Response, ApiError> {
    let session = manager.get(&id)?;
    let view = session
        .sample(sample)
        .ok_or_else(|| ApiError::NotFound(format!("no sample {sample} in session {id}")))?;
    if let Some(path) = view.asset.as_deref().map(FsPath::new) {
        if let Ok(bytes) = tokio::fs::read(path).await {
            return Ok(([(header::CONTENT_TYPE, content_type(path))], bytes).into_response());
        }
    }
    Ok(Json(view).into_response())
}

fn content_type(path: &FsPath) -> &'static str {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("svg") => "image/svg+xml",
        Some("txt") => "text/plain; charset=utf-8",
        Some("json") => "application/json",
        _ => "application/octet-stream",
    }
}
