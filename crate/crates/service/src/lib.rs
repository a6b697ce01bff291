//! HTTP/JSON annotation service: a human annotator fetches queried
//! observations and submits quality labels, driving an active-learning
//! session live.
//!
//! | method | path                          | body            |
//! |--------|-------------------------------|-----------------|
//! | POST   | `/datasets?name=`             | CSV upload      |
//! | GET    | `/datasets/{id}`              |                 |
//! | POST   | `/sessions`                   | JSON            |
//! | GET    | `/sessions/{id}/pending`      |                 |
//! | POST   | `/sessions/{id}/labels`       | JSON            |
//! | GET    | `/sessions/{id}/status`       |                 |
//! | GET    | `/sessions/{id}/report`       |                 |
//! | GET    | `/sessions/{id}/predictions`  | CSV download    |
//!
//! Every error body is `{code, message, details}`.

pub mod api;
mod error;
mod registry;
mod session;
mod store;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::Value;

pub use error::{ApiError, ErrorBody};
pub use registry::{Registry, TrainingGuard};
pub use session::CONTEXT_RADIUS;
pub use store::StoreError;

use api::{CreateSessionRequest, SubmitLabelsRequest};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 512 * 1024 * 1024;

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/pending", get(get_pending))
        .route("/sessions/{id}/labels", post(submit_labels))
        .route("/sessions/{id}/status", get(get_status))
        .route("/sessions/{id}/report", get(get_report))
        .route("/sessions/{id}/predictions", get(get_predictions))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route", Value::Null) })
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(registry)
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, registry: Arc<Registry>) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "annotation service listening");
    axum::serve(listener, router(registry))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

type Reg = State<Arc<Registry>>;

/// Runs registry work off the async workers; refits can take a while.
async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_data() { StatusCode::UNPROCESSABLE_ENTITY } else { StatusCode::BAD_REQUEST };
        ApiError::new(status, "invalid_body", e.to_string(), Value::Null)
    })
}

async fn upload_dataset(State(reg): Reg, Query(q): Query<HashMap<String, String>>, body: Bytes) -> Result<Response, ApiError> {
    let name = q.get("name").cloned().unwrap_or_else(|| "upload".to_owned());
    let info = blocking(move || reg.upload_dataset(&name, &body)).await?;
    Ok((StatusCode::CREATED, Json(info)).into_response())
}

async fn get_dataset(State(reg): Reg, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(reg.dataset(&id)?).into_response())
}

async fn create_session(State(reg): Reg, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateSessionRequest = parse_json(&body)?;
    let created = blocking(move || reg.create_session(request)).await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_pending(State(reg): Reg, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(reg.pending(&id)?).into_response())
}

async fn submit_labels(State(reg): Reg, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let request: SubmitLabelsRequest = parse_json(&body)?;
    let result = blocking(move || reg.submit_labels(&id, &request)).await?;
    Ok(Json(result).into_response())
}

async fn get_status(State(reg): Reg, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(reg.status(&id)?).into_response())
}

async fn get_report(State(reg): Reg, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(reg.report(&id)?).into_response())
}

async fn get_predictions(State(reg): Reg, Path(id): Path<String>) -> Result<Response, ApiError> {
    let csv = reg.predictions_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}
