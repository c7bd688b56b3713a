//! JSON API over [`StudyService`].
//!
//! ```text
//! POST /api/studies/{sid}/sessions    {reader_id, seed?} -> {session_id}
//! GET  /api/sessions/{id}/next        -> {item_id, image_url, index, total} | {complete: true}
//! POST /api/sessions/{id}/responses   {item_id, choice, comment?} -> {accepted: true}
//! GET  /api/studies/{sid}/export      -> text/csv
//! GET  /img/{sid}/{item_id}           -> image/png, 512x512
//! ```
//!
//! There is deliberately no route to fetch an earlier item.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use crate::images::render_for_display;
use crate::service::{StudyError, StudyService};

impl StudyError {
    pub fn status(&self) -> StatusCode {
        match self {
            StudyError::UnknownStudy(_) | StudyError::UnknownSession(_) | StudyError::UnknownItem(_) => {
                StatusCode::NOT_FOUND
            }
            StudyError::DuplicateSession { .. }
            | StudyError::OutOfOrder { .. }
            | StudyError::NotServed(_)
            | StudyError::AlreadyAnswered(_) => StatusCode::CONFLICT,
            StudyError::InvalidChoice(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StudyError::BadRequest(_) => StatusCode::BAD_REQUEST,
            StudyError::InvalidDefinition(_) | StudyError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for StudyError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(json!({ "error": self.to_string(), "code": self.code() }))).into_response()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    reader_id: String,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitResponse {
    item_id: String,
    choice: String,
    #[serde(default)]
    comment: Option<String>,
}

/// Parses a JSON body ourselves so malformed input maps onto the error schema.
fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, StudyError> {
    serde_json::from_slice(body).map_err(|e| StudyError::BadRequest(e.to_string()))
}

type Svc = State<Arc<StudyService>>;

async fn create_session(State(svc): Svc, Path(sid): Path<String>, body: Bytes) -> Result<Response, StudyError> {
    let req: CreateSession = parse(&body)?;
    let session_id = svc.create_session(&sid, &req.reader_id, req.seed)?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": session_id }))).into_response())
}

async fn next_item(State(svc): Svc, Path(id): Path<String>) -> Result<Response, StudyError> {
    Ok(Json(svc.next_item(&id)?).into_response())
}

async fn submit_response(State(svc): Svc, Path(id): Path<String>, body: Bytes) -> Result<Response, StudyError> {
    let req: SubmitResponse = parse(&body)?;
    svc.submit_response(&id, &req.item_id, &req.choice, req.comment)?;
    Ok(Json(json!({ "accepted": true })).into_response())
}

async fn export(State(svc): Svc, Path(sid): Path<String>) -> Result<Response, StudyError> {
    let csv = svc.export_csv(&sid)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn image(State(svc): Svc, Path((sid, item_id)): Path<(String, String)>) -> Result<Response, StudyError> {
    let path = svc.image_path(&sid, &item_id)?;
    let png = tokio::task::spawn_blocking(move || render_for_display(&path))
        .await
        .expect("image task panicked")?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png"),
            (header::CACHE_CONTROL, "no-store"),
        ],
        png,
    )
        .into_response())
}

async fn not_found() -> StudyError {
    StudyError::BadRequest("no such route".into())
}

/// API routes plus, when `assets` is given, static UI files at `/`.
pub fn router(service: Arc<StudyService>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/studies/{sid}/sessions", post(create_session))
        .route("/api/sessions/{id}/next", get(next_item))
        .route("/api/sessions/{id}/responses", post(submit_response))
        .route("/api/studies/{sid}/export", get(export))
        .route("/img/{sid}/{item_id}", get(image))
        .with_state(service);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

/// Serves until the listener fails or the task is cancelled.
pub async fn serve(listener: TcpListener, service: Arc<StudyService>, assets: Option<PathBuf>) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, "study service listening");
    }
    axum::serve(listener, router(service, assets)).await
}
