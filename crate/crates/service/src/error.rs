use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::json;

use a3s::constraints::{Relation, SamplePair};

/// The closure fact an answer ran into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Conflict {
    pub pair: SamplePair,
    pub attempted: Relation,
    pub conflict: SamplePair,
    pub existing: Relation,
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    /// The answer names a query that is not pending.
    #[error("{0}")]
    Stale(String),
    #[error("answer {} for ({}, {}) contradicts {} for ({}, {})",
        .0.attempted, .0.pair.0, .0.pair.1, .0.existing, .0.conflict.0, .0.conflict.1)]
    Contradiction(Conflict),
    #[error("{0}")]
    Internal(String),
}

impl From<a3s::Error> for ApiError {
    fn from(e: a3s::Error) -> Self {
        match e {
            a3s::Error::Contradiction { pair, attempted, conflict, existing } => ApiError::Contradiction(Conflict {
                pair,
                attempted,
                conflict,
                existing,
            }),
            a3s::Error::Io { .. } => ApiError::BadRequest(e.to_string()),
            a3s::Error::OracleUnavailable(_) | a3s::Error::BudgetExhausted(_) => ApiError::Internal(e.to_string()),
            other => ApiError::BadRequest(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, body) = match self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, json!({ "error": "not_found", "message": message })),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, json!({ "error": "bad_request", "message": message })),
            ApiError::Stale(_) => (StatusCode::CONFLICT, json!({ "error": "stale", "message": message })),
            ApiError::Contradiction(c) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({ "error": "contradiction", "message": message, "conflict": c }),
            ),
            ApiError::Internal(_) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                json!({ "error": "internal", "message": message }),
            ),
        };
        (status, Json(body)).into_response()
    }
}
