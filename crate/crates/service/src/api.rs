//! HTTP handlers. Each handler parses its request, makes one store call and
//! serializes the result; there is no business logic here.

use std::collections::BTreeMap;
use std::sync::{Arc, PoisonError, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use logoped_core::datastore::{
    ChildDraft, ChildRecord, Evaluation, ExerciseManifest, Phase, Store, StoreError,
};
use logoped_core::therapy::{self, LearningConfig, Override};
use logoped_core::SegmenterConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Config;
use crate::error::ApiError;

/// Uploads larger than this are refused.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

fn system_clock() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

/// Shared server state. All writes go through [`AppState::write`], which
/// holds the store's write lock for the whole mutation and the snapshot
/// that follows it.
pub struct AppState {
    store: RwLock<Store>,
    segmenter: SegmenterConfig,
    learning: LearningConfig,
    clock: Clock,
}

impl AppState {
    pub fn new(store: Store, cfg: &Config) -> Self {
        Self {
            store: RwLock::new(store),
            segmenter: cfg.segmenter,
            learning: cfg.learning,
            clock: Arc::new(system_clock),
        }
    }

    pub fn with_clock(mut self, clock: impl Fn() -> i64 + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn read<T>(&self, f: impl FnOnce(&Store) -> T) -> T {
        f(&self.store.read().unwrap_or_else(PoisonError::into_inner))
    }

    /// Runs one mutation and persists the store if it succeeded.
    pub fn write<T>(&self, f: impl FnOnce(&mut Store, i64) -> Result<T, StoreError>) -> Result<T, ApiError> {
        let mut store = self.store.write().unwrap_or_else(PoisonError::into_inner);
        let out = f(&mut store, (self.clock)())?;
        store.persist()?;
        Ok(out)
    }
}

type Shared = Arc<AppState>;

/// [`AppState::write`] on the blocking pool: mutations may decode audio and
/// always write the snapshot.
async fn write<T: Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&mut Store, i64, &AppState) -> Result<T, StoreError> + Send + 'static,
) -> Result<T, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || state.write(|store, now| f(store, now, &state)))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

fn json_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/children", get(list_children).post(upsert_child))
        .route("/children/{id}", get(get_child))
        .route("/children/{id}/sessions", get(child_sessions).post(upload_session))
        .route("/children/{id}/suggestion", get(child_suggestion))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/segments", get(session_segments))
        .route("/sessions/{id}/audio", get(session_audio))
        .route("/segments/{id}", get(get_segment))
        .route("/segments/{id}/audio", get(segment_audio))
        .route("/segments/{id}/evaluation", put(put_evaluation))
        .route("/suggestions/{id}", get(get_suggestion))
        .route("/suggestions/{id}/override", post(override_suggestion))
        .route("/report/cohort", get(cohort_report))
        .route("/kb", get(get_kb).put(put_kb))
        .route("/kb/suggestion", get(kb_suggestion))
        .route("/kb/infer", post(kb_infer))
        .route("/exercises", get(list_exercises).post(post_exercise))
        .route("/exercises/{id}", get(get_exercise))
        .route("/exercises/{id}/bundle", get(exercise_bundle))
        .route("/assets", post(post_asset))
        .fallback(not_found)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

async fn not_found() -> ApiError {
    ApiError::new("not_found", "no such route")
}

fn wav_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response()
}

// ---- children ----

async fn list_children(State(s): State<Shared>) -> Json<Vec<ChildRecord>> {
    Json(s.read(|st| st.children().cloned().collect()))
}

async fn upsert_child(State(s): State<Shared>, body: Bytes) -> Result<(StatusCode, Json<ChildRecord>), ApiError> {
    let draft: ChildDraft = json_body(&body)?;
    let (created, record) = write(&s, move |st, _, _| {
        let existed = draft.id.as_deref().is_some_and(|id| st.child(id).is_ok());
        let id = st.upsert_child(draft)?;
        Ok((!existed, st.child(&id)?.clone()))
    })
    .await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(record)))
}

async fn get_child(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<ChildRecord>, ApiError> {
    Ok(Json(s.read(|st| st.child(&id).cloned())?))
}

async fn child_sessions(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let sessions = s.read(|st| {
        st.sessions_for_child(&id)
            .map(|v| v.into_iter().cloned().collect::<Vec<_>>())
    })?;
    Ok(Json(sessions).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct PhaseQuery {
    phase: Option<String>,
}

/// Recording upload, either as the raw request body or as a multipart form
/// with a file field and an optional `phase` field.
async fn upload_session(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<PhaseQuery>,
    req: Request,
) -> Result<Response, ApiError> {
    let multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let mut phase = q.phase;
    let wav = if multipart {
        let mut form = Multipart::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut file = None;
        while let Some(field) = form.next_field().await.map_err(|e| ApiError::bad_request(e.body_text()))? {
            if field.name() == Some("phase") {
                phase = Some(field.text().await.map_err(|e| ApiError::bad_request(e.body_text()))?);
            } else if file.is_none() {
                file = Some(field.bytes().await.map_err(|e| ApiError::bad_request(e.body_text()))?);
            }
        }
        file.ok_or_else(|| ApiError::bad_request("multipart upload has no file field"))?
    } else {
        Bytes::from_request(req, &()).await.map_err(|e| ApiError::bad_request(e.body_text()))?
    };
    let phase: Phase = phase
        .ok_or_else(|| ApiError::bad_request("`phase` is required: PRE_TEST, THERAPY or POST_TEST"))?
        .parse()?;
    let session = write(&s, move |st, now, app| st.ingest_session(&id, &wav, phase, &app.segmenter, now)).await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn child_suggestion(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let sug = write(&s, move |st, now, _| st.suggest_for_child(&id, now)).await?;
    Ok(Json(sug).into_response())
}

// ---- sessions and segments ----

async fn get_session(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.read(|st| st.session(&id).cloned())?).into_response())
}

async fn session_segments(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.read(|st| st.session_segments(&id))?).into_response())
}

async fn session_audio(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let bytes = s.read(|st| st.session(&id).and_then(|ses| st.session_audio(ses)))?;
    Ok(wav_response(bytes))
}

async fn get_segment(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.read(|st| st.segment(&id))?).into_response())
}

async fn segment_audio(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(wav_response(s.read(|st| st.segment_audio(&id))?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationBody {
    pub expected_sound: String,
    pub probe: String,
    pub score: u8,
}

async fn put_evaluation(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: EvaluationBody = json_body(&body)?;
    let ev = Evaluation {
        segment_id: id,
        expected_sound: b.expected_sound,
        probe: b.probe,
        score: b.score,
    };
    let stored = write(&s, move |st, _, _| st.record_evaluation(ev)).await?;
    Ok(Json(stored).into_response())
}

// ---- suggestions ----

async fn get_suggestion(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.read(|st| st.suggestion(&id).cloned())?).into_response())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OverrideBody {
    #[serde(default)]
    pub difficulty: Option<f64>,
    #[serde(default)]
    pub dosage: Option<f64>,
}

async fn override_suggestion(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let b: OverrideBody = json_body(&body)?;
    let ov = Override {
        suggestion_id: id,
        difficulty: b.difficulty,
        dosage: b.dosage,
    };
    let record = write(&s, move |st, now, app| st.apply_override(&ov, &app.learning, now)).await?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

// ---- report ----

fn wants_csv(headers: &HeaderMap) -> bool {
    headers
        .get_all(header::ACCEPT)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .any(|v| v.split(',').any(|m| m.trim().starts_with("text/csv")))
}

async fn cohort_report(State(s): State<Shared>, headers: HeaderMap) -> Response {
    let report = s.read(|st| st.cohort_report());
    if wants_csv(&headers) {
        ([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], report.to_csv()).into_response()
    } else {
        Json(report).into_response()
    }
}

// ---- knowledge base ----

fn fcl_response(text: String) -> Response {
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], text).into_response()
}

async fn get_kb(State(s): State<Shared>) -> Response {
    fcl_response(s.read(|st| st.kb_text().to_string()))
}

async fn put_kb(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("FCL must be UTF-8"))?;
    let canonical = write(&s, move |st, _, _| st.replace_kb(&text).map(|kb| kb.to_fcl())).await?;
    Ok(fcl_response(canonical))
}

#[derive(Debug, Default, Deserialize)]
struct SuggestionQuery {
    severity: Option<String>,
    progress: Option<String>,
}

fn number(name: &str, value: Option<String>) -> Result<f64, ApiError> {
    let v = value.ok_or_else(|| ApiError::bad_request(format!("`{name}` is required")))?;
    v.trim().parse().map_err(|_| ApiError::bad_request(format!("`{name}` is not a number: {v}")))
}

/// Suggestion for explicit severity and progress, without storing it.
async fn kb_suggestion(State(s): State<Shared>, Query(q): Query<SuggestionQuery>) -> Result<Response, ApiError> {
    let severity = number("severity", q.severity)?;
    let progress = number("progress", q.progress)?;
    let now = (s.clock)();
    let sug = s.read(|st| therapy::suggest(st.kb(), "", severity, progress, now))?;
    Ok(Json(sug).into_response())
}

async fn kb_infer(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let inputs: BTreeMap<String, f64> = json_body(&body)?;
    let (outputs, trace) = s.read(|st| st.kb().infer(&inputs))?;
    Ok(Json(json!({ "outputs": outputs, "trace": trace })).into_response())
}

// ---- exercises ----

async fn list_exercises(State(s): State<Shared>) -> Json<Vec<ExerciseManifest>> {
    Json(s.read(|st| st.exercises().cloned().collect()))
}

async fn post_exercise(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    let manifest: ExerciseManifest = json_body(&body)?;
    let stored = write(&s, move |st, _, _| st.put_exercise(manifest)).await?;
    Ok((StatusCode::CREATED, Json(stored)).into_response())
}

async fn get_exercise(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.read(|st| st.exercise(&id).cloned())?).into_response())
}

async fn exercise_bundle(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(s.read(|st| st.exercise_bundle(&id))?).into_response())
}

async fn post_asset(State(s): State<Shared>, body: Bytes) -> Result<Response, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("empty asset"));
    }
    let hash = write(&s, move |st, _, _| st.put_asset(&body)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "asset": hash }))).into_response())
}
