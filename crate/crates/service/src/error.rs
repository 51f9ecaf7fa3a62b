//! Mapping from module errors to HTTP responses.
//!
//! Every error a handler can hit becomes exactly one `(status, code)` pair
//! from [`ERROR_CODES`]. The matches below have no wildcard arms, so a new
//! error variant will not compile until it is given a code.

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use logoped_core::codec::CodecError;
use logoped_core::datastore::StoreError;
use logoped_core::fcl::{FclError, InferenceError};
use logoped_core::segmentation::SegmentationError;
use logoped_core::therapy::TherapyError;
use serde::{Deserialize, Serialize};

/// Every `(code, status)` the API can answer with.
pub const ERROR_CODES: &[(&str, u16)] = &[
    ("bad_request", 400),
    ("not_found", 404),
    ("invalid_enum", 400),
    ("invalid_record", 400),
    ("unknown_child", 404),
    ("unknown_session", 404),
    ("unknown_segment", 404),
    ("unknown_suggestion", 404),
    ("unknown_exercise", 404),
    ("unknown_asset", 400),
    ("score_out_of_range", 400),
    ("no_evaluations", 409),
    ("malformed_block", 400),
    ("malformed_wav", 400),
    ("unsupported_format", 415),
    ("invalid_sample_rate", 400),
    ("unsupported_rate", 400),
    ("unpaired_end_marker", 400),
    ("invalid_segmenter_config", 500),
    ("empty_scores", 400),
    ("input_out_of_range", 400),
    ("kb_mismatch", 409),
    ("missing_input", 400),
    ("non_finite_input", 400),
    ("stale_suggestion", 409),
    ("invalid_override", 400),
    ("invalid_learning_config", 500),
    ("fcl_syntax_error", 400),
    ("fcl_unknown_variable", 400),
    ("fcl_unknown_term", 400),
    ("fcl_non_monotone_points", 400),
    ("fcl_invalid", 400),
    ("corrupt_snapshot", 500),
    ("missing_blob", 500),
    ("io_error", 500),
    ("internal", 500),
];

/// JSON error body. `line` and `column` are set for FCL errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl ApiError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        let status = ERROR_CODES
            .iter()
            .find(|(c, _)| *c == code)
            .map(|&(_, s)| s)
            .unwrap_or_else(|| panic!("undocumented error code {code}"));
        Self {
            status,
            code,
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new("bad_request", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new("internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

fn codec_code(e: &CodecError) -> &'static str {
    match e {
        CodecError::MalformedBlock(_) => "malformed_block",
        CodecError::MalformedWav(_) => "malformed_wav",
        CodecError::UnsupportedFormat(_) => "unsupported_format",
        CodecError::InvalidSampleRate => "invalid_sample_rate",
    }
}

fn segmentation_code(e: &SegmentationError) -> &'static str {
    match e {
        SegmentationError::UnsupportedRate(_) => "unsupported_rate",
        SegmentationError::UnpairedEndMarker { .. } => "unpaired_end_marker",
        SegmentationError::InvalidConfig(_) => "invalid_segmenter_config",
    }
}

fn inference_code(e: &InferenceError) -> &'static str {
    match e {
        InferenceError::MissingInput(_) => "missing_input",
        InferenceError::NonFiniteInput { .. } => "non_finite_input",
    }
}

fn therapy_code(e: &TherapyError) -> &'static str {
    match e {
        TherapyError::EmptyScores => "empty_scores",
        TherapyError::ScoreOutOfRange(_) => "score_out_of_range",
        TherapyError::InputOutOfRange { .. } => "input_out_of_range",
        TherapyError::KbMismatch(_) => "kb_mismatch",
        TherapyError::Inference(e) => inference_code(e),
        TherapyError::StaleSuggestion => "stale_suggestion",
        TherapyError::InvalidOverride(_) => "invalid_override",
        TherapyError::InvalidLearningConfig(_) => "invalid_learning_config",
    }
}

fn fcl_code(e: &FclError) -> &'static str {
    match e {
        FclError::SyntaxError { .. } => "fcl_syntax_error",
        FclError::UnknownVariable { .. } => "fcl_unknown_variable",
        FclError::UnknownTerm { .. } => "fcl_unknown_term",
        FclError::NonMonotonePoints { .. } => "fcl_non_monotone_points",
        FclError::Invalid { .. } => "fcl_invalid",
    }
}

fn store_code(e: &StoreError) -> &'static str {
    match e {
        StoreError::InvalidEnum { .. } => "invalid_enum",
        StoreError::InvalidRecord(_) => "invalid_record",
        StoreError::UnknownChild(_) => "unknown_child",
        StoreError::UnknownSession(_) => "unknown_session",
        StoreError::UnknownSegment(_) => "unknown_segment",
        StoreError::UnknownSuggestion(_) => "unknown_suggestion",
        StoreError::UnknownExercise(_) => "unknown_exercise",
        StoreError::UnknownAsset(_) => "unknown_asset",
        StoreError::ScoreOutOfRange(_) => "score_out_of_range",
        StoreError::NoEvaluations(_) => "no_evaluations",
        StoreError::Codec(e) => codec_code(e),
        StoreError::Segmentation(e) => segmentation_code(e),
        StoreError::Therapy(e) => therapy_code(e),
        StoreError::Fcl(e) => fcl_code(e),
        StoreError::CorruptSnapshot(_) => "corrupt_snapshot",
        StoreError::MissingBlob(_) => "missing_blob",
        StoreError::Io(_) => "io_error",
    }
}

impl From<FclError> for ApiError {
    fn from(e: FclError) -> Self {
        let mut err = ApiError::new(fcl_code(&e), e.to_string());
        err.line = Some(e.line());
        err.column = e.column();
        err
    }
}

impl From<TherapyError> for ApiError {
    fn from(e: TherapyError) -> Self {
        ApiError::new(therapy_code(&e), e.to_string())
    }
}

impl From<InferenceError> for ApiError {
    fn from(e: InferenceError) -> Self {
        ApiError::new(inference_code(&e), e.to_string())
    }
}

impl From<CodecError> for ApiError {
    fn from(e: CodecError) -> Self {
        ApiError::new(codec_code(&e), e.to_string())
    }
}

impl From<SegmentationError> for ApiError {
    fn from(e: SegmentationError) -> Self {
        ApiError::new(segmentation_code(&e), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Fcl(inner) => inner.into(),
            other => ApiError::new(store_code(&other), other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_unique() {
        let mut codes: Vec<_> = ERROR_CODES.iter().map(|c| c.0).collect();
        codes.sort_unstable();
        codes.dedup();
        assert_eq!(codes.len(), ERROR_CODES.len());
    }

    #[test]
    fn fcl_errors_carry_position() {
        let e: ApiError = StoreError::Fcl(FclError::SyntaxError {
            line: 3,
            column: 7,
            message: "x".into(),
        })
        .into();
        assert_eq!((e.status, e.code, e.line, e.column), (400, "fcl_syntax_error", Some(3), Some(7)));
    }

    #[test]
    fn body_shape() {
        let e = ApiError::new("no_evaluations", "child `a` has no evaluated segments");
        let v = serde_json::to_value(&e).unwrap();
        assert_eq!(v, serde_json::json!({"code": "no_evaluations", "message": "child `a` has no evaluated segments"}));
    }
}
