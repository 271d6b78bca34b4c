use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use npc_spatial::chat::{ChatError, LlmError};
use npc_spatial::panorama::SegmentationError;
use serde::Serialize;

/// Error body returned by every endpoint: `{"error": {"code": .., "message": ..}}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    code: &'a str,
    message: &'a str,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn invalid_config(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
    }

    pub fn scene_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "scene_not_found", format!("no scene with id {id:?}"))
    }

    pub fn session_not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session with id {id:?}"))
    }

    pub fn session_ended(id: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "session_ended", format!("session {id:?} has ended"))
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        let (status, code) = match &e {
            LlmError::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "backend_timeout"),
            LlmError::RateLimited => (StatusCode::BAD_GATEWAY, "backend_rate_limited"),
            LlmError::MalformedResponse(_) => (StatusCode::BAD_GATEWAY, "backend_malformed_response"),
            LlmError::Status { .. } | LlmError::Transport(_) => (StatusCode::BAD_GATEWAY, "backend_error"),
            LlmError::EmptyConversation => (StatusCode::UNPROCESSABLE_ENTITY, "empty_conversation"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<SegmentationError> for ApiError {
    fn from(e: SegmentationError) -> Self {
        let (status, code) = match &e {
            SegmentationError::Timeout(_) => (StatusCode::GATEWAY_TIMEOUT, "segmentation_timeout"),
            _ => (StatusCode::BAD_GATEWAY, "segmentation_error"),
        };
        Self::new(status, code, e.to_string())
    }
}

impl From<ChatError> for ApiError {
    fn from(e: ChatError) -> Self {
        match e {
            ChatError::Backend(e) => e.into(),
            ChatError::Segmentation(e) => e.into(),
            ChatError::SessionEnded => Self::new(StatusCode::CONFLICT, "session_ended", "session has ended"),
            ChatError::EmptyMessage => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_message", e.to_string()),
            ChatError::NoQueries => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "no_queries", e.to_string()),
            ChatError::Compose(_) | ChatError::Radius(_) | ChatError::BackendConfig(_) => {
                Self::invalid_config(e.to_string())
            }
            ChatError::Io(_) => Self::new(StatusCode::BAD_GATEWAY, "io_error", e.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: ErrorDetail {
                code: self.code,
                message: &self.message,
            },
        };
        (self.status, Json(body)).into_response()
    }
}
