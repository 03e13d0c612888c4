use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use hubsim_core::api::ErrorBody;
use hubsim_core::Error;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, error: impl Into<String>) -> ApiError {
        ApiError { status, body: ErrorBody { kind: kind.into(), error: error.into(), seq: None } }
    }

    pub fn not_found(error: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::NOT_FOUND, "lookup", error)
    }

    pub fn gone(error: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::GONE, "session", error)
    }

    pub fn timeout(error: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", error)
    }

    pub fn internal(error: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", error)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> ApiError {
        let (status, kind, seq) = match &e {
            Error::Config(_) => (StatusCode::BAD_REQUEST, "config", None),
            Error::Parse { .. } | Error::Json(_) | Error::Decode { .. } => (StatusCode::BAD_REQUEST, "parse", None),
            Error::Domain(_) | Error::Protocol(_) => (StatusCode::BAD_REQUEST, "domain", None),
            Error::Generation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "generation", None),
            Error::Lookup(_) => (StatusCode::NOT_FOUND, "lookup", None),
            Error::Corruption { seq, .. } => (StatusCode::UNPROCESSABLE_ENTITY, "corruption", Some(*seq)),
            Error::Determinism { seq } => (StatusCode::CONFLICT, "determinism", Some(*seq)),
            Error::Invariant(_) | Error::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
        };
        ApiError { status, body: ErrorBody { kind: kind.into(), error: e.to_string(), seq } }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
