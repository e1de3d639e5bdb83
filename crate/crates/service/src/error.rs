use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use patterncraft_core::autoencoder::AeError;
use patterncraft_core::forest::ForestError;
use patterncraft_core::level::LevelError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default)]
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, body: ErrorBody { code: code.into(), message: message.into(), detail: Value::Null } }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", format!("{what} {id:?} does not exist"))
            .with_detail(serde_json::json!({ "kind": what, "id": id }))
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn precondition(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::PRECONDITION_FAILED, code, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {}: {}", self.status.as_u16(), self.body.code, self.body.message)
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<LevelError> for ApiError {
    fn from(e: LevelError) -> Self {
        let code = match &e {
            LevelError::UnknownLabel(_) => "UnknownLabel",
            LevelError::UnknownLevel(_) => "UnknownLevel",
            LevelError::UnknownGlyph { .. } => "UnknownGlyph",
            LevelError::OutOfBounds { .. } | LevelError::AnnotationOutOfBounds { .. } => "OutOfBounds",
            LevelError::Vocabulary(_) => "InvalidVocabulary",
            _ => "InvalidLevel",
        };
        ApiError::bad_request(code, e.to_string())
    }
}

impl From<ForestError> for ApiError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::InsufficientData(_) | ForestError::SingleClass => {
                ApiError::precondition("InsufficientData", e.to_string())
            }
            ForestError::VocabularyMismatch { .. } => ApiError::precondition("VocabularyMismatch", e.to_string()),
            ForestError::LabelOutOfRange(_) | ForestError::EmptyFeedback | ForestError::InvalidConfig(_) => {
                ApiError::bad_request("InvalidRequest", e.to_string())
            }
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<AeError> for ApiError {
    fn from(e: AeError) -> Self {
        match e {
            AeError::UnknownLabel(_) => ApiError::bad_request("UnknownLabel", e.to_string()),
            AeError::InvalidConfig(_) => ApiError::bad_request("InvalidRequest", e.to_string()),
            AeError::Level(l) => l.into(),
            AeError::EmptyDataset => ApiError::precondition("InsufficientData", e.to_string()),
            AeError::NotTrained | AeError::IncompatibleParent(_) => ApiError::precondition("MissingModel", e.to_string()),
            AeError::VocabularyMismatch { .. } => ApiError::precondition("VocabularyMismatch", e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::internal(format!("storage: {e}"))
    }
}

impl From<serde_json::Error> for ApiError {
    fn from(e: serde_json::Error) -> Self {
        ApiError::internal(format!("storage encoding: {e}"))
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
