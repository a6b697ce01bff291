use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use odeal::active::EngineError;
use serde::Serialize;
use serde_json::{json, Value};

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{status}: {}", body.message)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>, details: Value) -> Self {
        Self { status, body: ErrorBody { code, message: message.into(), details } }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"), json!({ what: id }))
    }

    pub fn conflict(code: &'static str, message: impl Into<String>, details: Value) -> Self {
        Self::new(StatusCode::CONFLICT, code, message, details)
    }

    pub fn unprocessable(code: &'static str, message: impl Into<String>, details: Value) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message, details)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message, Value::Null)
    }

    pub fn code(&self) -> &'static str {
        self.body.code
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let message = e.to_string();
        match e {
            EngineError::MissingLabels(missing) => ApiError::unprocessable("missing_labels", message, json!({ "missing": missing })),
            EngineError::UnexpectedLabels(extra) => ApiError::unprocessable("unexpected_labels", message, json!({ "unexpected": extra })),
            EngineError::WrongPhase(phase) => ApiError::conflict("wrong_phase", message, json!({ "phase": phase })),
            EngineError::UnknownIndex(i) => ApiError::unprocessable("unknown_index", message, json!({ "index": i })),
            EngineError::Classifier(_) | EngineError::Outlier(_) | EngineError::Data(_) => {
                ApiError::unprocessable("invalid_config", message, Value::Null)
            }
            EngineError::BudgetSmallerThanInitialSet { .. }
            | EngineError::BudgetExceedsPool { .. }
            | EngineError::InvalidBatchSize
            | EngineError::InvalidThreshold => ApiError::unprocessable("invalid_config", message, Value::Null),
            EngineError::EmptyUnlabeledSet | EngineError::ExternalTimeout => ApiError::internal(message),
        }
    }
}

impl From<odeal::Error> for ApiError {
    fn from(err: odeal::Error) -> Self {
        let message = err.to_string();
        match err {
            odeal::Error::Engine(e) => e.into(),
            odeal::Error::Data(_) | odeal::Error::Outlier(_) | odeal::Error::Classifier(_) | odeal::Error::Eval(_) => {
                ApiError::unprocessable("invalid_config", message, Value::Null)
            }
        }
    }
}
