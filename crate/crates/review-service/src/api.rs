//! Request bodies, response shapes and the error-to-status mapping.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use linebench::dataset::{DatasetError, Sample, SplitTag, Status};
use linebench::engines::EngineError;
use linebench::metrics::{EditCounts, EditOp};
use linebench::textnorm::Violation;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const PAGE_SIZE: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchRequest {
    pub expected_revision: u64,
    #[serde(default)]
    pub ground_truth: Option<String>,
    #[serde(default)]
    pub status: Option<Status>,
    /// Store text with charset violations anyway.
    #[serde(default)]
    pub force: bool,
}

impl PatchRequest {
    pub fn from_json(body: &[u8]) -> Result<Self, ApiError> {
        let req: PatchRequest = serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))?;
        if req.ground_truth.is_none() && req.status.is_none() {
            return Err(ApiError::bad_request("patch must set ground_truth or status"));
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReprocessRequest {
    pub blur_k: Option<i64>,
    pub threshold: Option<i64>,
    pub invert: Option<bool>,
}

pub const MAX_BLUR_K: i64 = 64;

impl ReprocessRequest {
    /// Empty bodies mean all defaults.
    pub fn from_json(body: &[u8]) -> Result<Self, ApiError> {
        if body.iter().all(u8::is_ascii_whitespace) {
            return Ok(Self::default());
        }
        let req: ReprocessRequest = serde_json::from_slice(body).map_err(|e| ApiError::bad_params(e.to_string()))?;
        if let Some(k) = req.blur_k {
            if !(1..=MAX_BLUR_K).contains(&k) {
                return Err(ApiError::bad_params(format!("blur_k {k} outside 1..={MAX_BLUR_K}")));
            }
        }
        if let Some(t) = req.threshold {
            if !(0..=255).contains(&t) {
                return Err(ApiError::bad_params(format!("threshold {t} outside 0..=255")));
            }
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecognizeRequest {
    pub engine: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ListQuery {
    pub split: Option<String>,
    pub status: Option<String>,
    pub author: Option<String>,
    pub page: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleSummary {
    pub id: String,
    pub author: u32,
    pub status: Status,
    pub split: SplitTag,
    pub revision: u64,
    pub ground_truth: String,
    pub has_processed: bool,
}

impl From<&Sample> for SampleSummary {
    fn from(s: &Sample) -> Self {
        Self {
            id: s.id.clone(),
            author: s.author,
            status: s.status,
            split: s.split,
            revision: s.revision,
            ground_truth: s.ground_truth.as_str().to_string(),
            has_processed: s.processed.is_some(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SamplePage {
    pub items: Vec<SampleSummary>,
    pub page: usize,
    pub page_size: usize,
    pub total: usize,
    pub pages: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReprocessResponse {
    pub id: String,
    pub processed: String,
    pub width: usize,
    pub height: usize,
    pub revision: u64,
    /// Set when nearly every pixel landed on one binary level.
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RecognizeResponse {
    pub id: String,
    pub engine: String,
    pub reference: String,
    pub hypothesis: String,
    /// Character alignment, reference against hypothesis.
    pub ops: Vec<EditOp>,
    pub chars: EditCounts,
    pub words: EditCounts,
    pub cer: f64,
    pub wer: f64,
}

/// JSON error body `{error, message, ...}` with its status code.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadRequest", message)
    }

    pub fn bad_params(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BadParams", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NotFound", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }

    pub fn validation(message: impl Into<String>, violations: &[Violation]) -> Self {
        let mut e = Self::new(StatusCode::UNPROCESSABLE_ENTITY, "ValidationFailed", message);
        e.body["violations"] = violations
            .iter()
            .map(|v| json!({ "position": v.position, "codepoint": format!("U+{:04X}", v.codepoint as u32) }))
            .collect();
        e
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::NotFound(_) => Self::not_found(e.to_string()),
            DatasetError::RevisionConflict { expected, current, .. } => {
                let mut r = Self::new(StatusCode::CONFLICT, "RevisionConflict", e.to_string());
                r.body["expected_revision"] = expected.into();
                r.body["current_revision"] = current.into();
                r
            }
            DatasetError::MissingImage(_) => Self::validation(e.to_string(), &[]),
            other => Self::internal(other.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::EngineFailure { .. } | EngineError::EngineTimeout(_) | EngineError::InvalidUtf8 => {
                Self::new(StatusCode::BAD_GATEWAY, "EngineFailure", e.to_string())
            }
            other => Self::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_needs_a_field() {
        assert!(PatchRequest::from_json(br#"{"expected_revision": 0}"#).is_err());
        assert!(PatchRequest::from_json(br#"{"status": "clean"}"#).is_err());
        assert!(PatchRequest::from_json(br#"{"expected_revision": 0, "nope": 1, "status": "raw"}"#).is_err());
        let p = PatchRequest::from_json(br#"{"expected_revision": 3, "status": "rejected"}"#).unwrap();
        assert_eq!((p.expected_revision, p.status, p.force), (3, Some(Status::Rejected), false));
    }

    #[test]
    fn reprocess_ranges() {
        assert_eq!(ReprocessRequest::from_json(b"").unwrap(), ReprocessRequest::default());
        assert!(ReprocessRequest::from_json(br#"{"threshold": 256}"#).is_err());
        assert!(ReprocessRequest::from_json(br#"{"threshold": -1}"#).is_err());
        assert!(ReprocessRequest::from_json(br#"{"blur_k": 0}"#).is_err());
        assert!(ReprocessRequest::from_json(br#"{"blur_k": 3, "threshold": 0, "invert": true}"#).is_ok());
    }

    #[test]
    fn violation_body() {
        let e = ApiError::validation(
            "x",
            &[Violation {
                position: 0,
                codepoint: 'A',
            }],
        );
        assert_eq!(e.status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(e.body["violations"][0]["codepoint"], "U+0041");
        assert_eq!(e.body["violations"][0]["position"], 0);
    }
}
