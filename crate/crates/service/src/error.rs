use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use doric_core::matrix::MatrixError;
use serde_json::{json, Value};

use crate::wire::SessionResource;

/// An error response: `{"error": {"code", "message", ...}, "session"?}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    /// Extra machine-readable fields, such as the offending cell.
    pub details: Option<Value>,
    /// The session after the failed request, when there is one.
    pub session: Option<Box<SessionResource>>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            details: None,
            session: None,
        }
    }

    pub fn with_session(mut self, session: SessionResource) -> Self {
        self.session = Some(Box::new(session));
        self
    }

    pub fn not_found(id: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not-found",
            format!("no session {id:?}"),
        )
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<MatrixError> for ApiError {
    fn from(e: MatrixError) -> Self {
        let details = match &e {
            MatrixError::NotABit {
                line,
                column,
                value,
            } => Some(json!({"line": line, "column": column, "value": value})),
            MatrixError::Header { line, .. } | MatrixError::Ragged { line, .. } => {
                Some(json!({"line": line}))
            }
            MatrixError::UncoveredFailingTest { test } => Some(json!({"test": test})),
            _ => None,
        };
        ApiError {
            details,
            ..ApiError::new(StatusCode::BAD_REQUEST, "invalid-matrix", e.to_string())
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({"code": self.code, "message": self.message});
        if let Some(Value::Object(extra)) = self.details {
            error.as_object_mut().unwrap().extend(extra);
        }
        let mut body = json!({"error": error});
        if let Some(s) = self.session {
            body["session"] = serde_json::to_value(*s).unwrap_or(Value::Null);
        }
        (self.status, Json(body)).into_response()
    }
}
