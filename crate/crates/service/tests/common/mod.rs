//! Fixtures shared by the service test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use logoped_core::codec::{wav_write, AdpcmLayout, CodecError};
use logoped_core::datastore::*;
use logoped_core::fcl::{FclError, InferenceError};
use logoped_core::segmentation::SegmentationError;
use logoped_core::therapy::{self, LearningConfig, Override, TherapyError};
use logoped_core::{SegmenterConfig, WavFormat};
use logoped_service::api::{router, AppState};
use logoped_service::config::Config;
use logoped_service::error::{ApiError, ERROR_CODES};
use logoped_testkit::corpus::simple_session;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use tower::ServiceExt;

/// The server clock in every test.
pub const NOW: i64 = 1_700_000_000_000;

pub fn three_bursts() -> &'static [u8] {
    static WAV: OnceLock<Vec<u8>> = OnceLock::new();
    WAV.get_or_init(|| {
        let s = simple_session(1, -40.0, &[(300.0, 250.0, 20.0), (1100.0, 300.0, 18.0), (2000.0, 350.0, 15.0)], 2700.0);
        wav_write(&s.pcm, WavFormat::ImaAdpcm(AdpcmLayout::default()))
    })
}

pub fn two_bursts() -> &'static [u8] {
    static WAV: OnceLock<Vec<u8>> = OnceLock::new();
    WAV.get_or_init(|| {
        let s = simple_session(2, -40.0, &[(300.0, 400.0, 20.0), (1300.0, 300.0, 15.0)], 2000.0);
        wav_write(&s.pcm, WavFormat::Pcm16)
    })
}

pub fn eval(segment_id: &str, score: u8) -> Evaluation {
    Evaluation { segment_id: segment_id.into(), expected_sound: "r".into(), probe: "rață".into(), score }
}

pub struct Seeded {
    pub store: Store,
    /// Has an evaluated pre-test and post-test.
    pub child: String,
    /// Has no sessions.
    pub fresh_child: String,
    pub session: String,
    pub segment: String,
    pub suggestion: String,
    pub exercise: String,
}

pub fn seeded(store: Store) -> Seeded {
    let mut s = store;
    let cfg = SegmenterConfig::default();
    let child = s.upsert_child(ChildDraft::new("Ioana", 70, Disorder::Sigmatism, TherapyGroup::Classical).with_id("ioana")).unwrap();
    let fresh_child = s.upsert_child(ChildDraft::new("Mihai", 64, Disorder::Rotacism, TherapyGroup::Assisted)).unwrap();
    let pre = s.ingest_session(&child, three_bursts(), Phase::PreTest, &cfg, NOW - 3000).unwrap();
    for (seg, score) in pre.segments.iter().zip([1, 2, 1]) {
        s.record_evaluation(eval(&seg.id, score)).unwrap();
    }
    let post = s.ingest_session(&child, two_bursts(), Phase::PostTest, &cfg, NOW - 2000).unwrap();
    for (seg, score) in post.segments.iter().zip([2, 3]) {
        s.record_evaluation(eval(&seg.id, score)).unwrap();
    }
    let suggestion = s.suggest_for_child(&child, NOW - 1000).unwrap().id;
    let asset = s.put_asset(b"RIFF fake prompt audio").unwrap();
    let exercise = s
        .put_exercise(ExerciseManifest {
            id: String::new(),
            target_sound: "s".into(),
            items: vec![ExerciseItem { kind: ItemKind::Audio, asset, caption: "sanie".into() }],
            difficulty: 2,
        })
        .unwrap()
        .id;
    Seeded { store: s, child, fresh_child, session: pre.id, segment: pre.segments[0].id.clone(), suggestion, exercise }
}

pub fn app(store: Store) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(store, &Config::default()).with_clock(|| NOW));
    (router(state.clone()), state)
}

#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

pub async fn send(app: &Router, method: &str, uri: &str, headers: &[(&str, &str)], body: impl Into<Body>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let resp = app.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec();
    Reply { status, content_type, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, "GET", uri, &[], Body::empty()).await
}

pub async fn send_json(app: &Router, method: &str, uri: &str, body: &Value) -> Reply {
    send(app, method, uri, &[("content-type", "application/json")], serde_json::to_vec(body).unwrap()).await
}

pub const BOUNDARY: &str = "logoped-test-boundary";

pub fn multipart(phase: Option<&str>, wav: &[u8]) -> Vec<u8> {
    let mut body = Vec::new();
    if let Some(phase) = phase {
        body.extend(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"phase\"\r\n\r\n{phase}\r\n").bytes());
    }
    body.extend(
        format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"s.wav\"\r\nContent-Type: audio/wav\r\n\r\n").bytes(),
    );
    body.extend_from_slice(wav);
    body.extend(format!("\r\n--{BOUNDARY}--\r\n").bytes());
    body
}

/// Checks that `reply` is what the direct call produced: the value with
/// `ok` status, or the mapped error.
pub fn agree<T: Serialize, E: Into<ApiError>>(what: &str, reply: &Reply, direct: Result<T, E>, ok: u16) -> Result<(), String> {
    let (status, body) = match direct {
        Ok(v) => (ok, serde_json::to_value(v).unwrap()),
        Err(e) => {
            let e: ApiError = e.into();
            (e.status, serde_json::to_value(&e).unwrap())
        }
    };
    if reply.status.as_u16() != status {
        return Err(format!("{what}: status {} instead of {status}: {}", reply.status, String::from_utf8_lossy(&reply.body)));
    }
    if reply.json() != body {
        return Err(format!("{what}: body differs\n  api:    {}\n  direct: {body}", reply.json()));
    }
    Ok(())
}

fn bytes_agree(what: &str, reply: &Reply, direct: Result<Vec<u8>, StoreError>, content_type: &str) -> Result<(), String> {
    let direct = direct.map_err(|e| format!("{what}: direct call failed: {e}"))?;
    if reply.status != StatusCode::OK || !reply.content_type.starts_with(content_type) || reply.body != direct {
        return Err(format!("{what}: {} {} ({} bytes, want {})", reply.status, reply.content_type, reply.body.len(), direct.len()));
    }
    Ok(())
}

/// Drives every endpoint against a seeded store and compares each response
/// with the same call made directly on a clone of that store. Returns how
/// many requests were checked.
pub async fn facade() -> Result<usize, String> {
    let seed = seeded(Store::in_memory());
    let mut mirror = seed.store.clone();
    let (app, state) = app(seed.store);
    let learning = LearningConfig::default();
    let seg_cfg = SegmenterConfig::default();
    let (child, ses, seg, sug, ex) = (&seed.child, &seed.session, &seed.segment, &seed.suggestion, &seed.exercise);
    let mut checked = 0;
    macro_rules! check {
        ($what:expr, $reply:expr, $direct:expr, $ok:expr) => {{
            agree($what, &$reply, $direct, $ok)?;
            checked += 1;
            if state.read(|s| s.snapshot()) != mirror.snapshot() {
                return Err(format!("{}: server state diverged from the direct calls", $what));
            }
        }};
    }

    // reads
    check!("list children", get(&app, "/children").await, Ok::<_, StoreError>(mirror.children().collect::<Vec<_>>()), 200);
    check!("child", get(&app, &format!("/children/{child}")).await, mirror.child(child), 200);
    check!("unknown child", get(&app, "/children/nobody").await, mirror.child("nobody"), 200);
    check!("child sessions", get(&app, &format!("/children/{child}/sessions")).await, mirror.sessions_for_child(child), 200);
    check!("session", get(&app, &format!("/sessions/{ses}")).await, mirror.session(ses), 200);
    check!("unknown session", get(&app, "/sessions/ses-999").await, mirror.session("ses-999"), 200);
    check!("segments", get(&app, &format!("/sessions/{ses}/segments")).await, mirror.session_segments(ses), 200);
    check!("segment", get(&app, &format!("/segments/{seg}")).await, mirror.segment(seg), 200);
    check!("unknown segment audio", get(&app, "/segments/seg-999/audio").await, mirror.segment_audio("seg-999"), 200);
    bytes_agree("segment audio", &get(&app, &format!("/segments/{seg}/audio")).await, mirror.segment_audio(seg), "audio/wav")?;
    let session = mirror.session(ses).unwrap().clone();
    bytes_agree("session audio", &get(&app, &format!("/sessions/{ses}/audio")).await, mirror.session_audio(&session), "audio/wav")?;
    checked += 2;
    check!("suggestion", get(&app, &format!("/suggestions/{sug}")).await, mirror.suggestion(sug), 200);
    check!("cohort report", get(&app, "/report/cohort").await, Ok::<_, StoreError>(mirror.cohort_report()), 200);
    let csv = send(&app, "GET", "/report/cohort", &[("accept", "text/csv")], Body::empty()).await;
    if !csv.content_type.starts_with("text/csv") || csv.text() != mirror.cohort_report().to_csv() {
        return Err("cohort CSV differs".into());
    }
    let kb = get(&app, "/kb").await;
    if kb.status != StatusCode::OK || kb.text() != mirror.kb_text() {
        return Err("GET /kb differs".into());
    }
    checked += 2;
    check!(
        "kb suggestion",
        get(&app, "/kb/suggestion?severity=1.25&progress=-0.5").await,
        therapy::suggest(mirror.kb(), "", 1.25, -0.5, NOW),
        200
    );
    check!(
        "kb suggestion out of range",
        get(&app, "/kb/suggestion?severity=4&progress=0").await,
        therapy::suggest(mirror.kb(), "", 4.0, 0.0, NOW),
        200
    );
    let inputs = BTreeMap::from([("severity".to_string(), 1.0), ("progress".to_string(), 0.5)]);
    check!(
        "kb infer",
        send_json(&app, "POST", "/kb/infer", &json!(inputs)).await,
        mirror.kb().infer(&inputs).map(|(outputs, trace)| json!({"outputs": outputs, "trace": trace})),
        200
    );
    let partial = BTreeMap::from([("severity".to_string(), 1.0)]);
    check!(
        "kb infer missing input",
        send_json(&app, "POST", "/kb/infer", &json!(partial)).await,
        mirror.kb().infer(&partial).map(|(o, _)| o),
        200
    );
    check!("exercises", get(&app, "/exercises").await, Ok::<_, StoreError>(mirror.exercises().collect::<Vec<_>>()), 200);
    check!("exercise", get(&app, &format!("/exercises/{ex}")).await, mirror.exercise(ex), 200);
    check!("bundle", get(&app, &format!("/exercises/{ex}/bundle")).await, mirror.exercise_bundle(ex), 200);
    check!("unknown bundle", get(&app, "/exercises/ex-9/bundle").await, mirror.exercise_bundle("ex-9"), 200);

    // children
    let draft = json!({"name": "Ana", "age_months": 58, "disorder": "polymorph_dyslalia", "therapy_group": "ASSISTED"});
    let reply = send_json(&app, "POST", "/children", &draft).await;
    let direct = mirror
        .upsert_child(serde_json::from_value(draft).unwrap())
        .and_then(|id| mirror.child(&id).cloned());
    check!("create child", reply, direct, 201);
    let update = json!({"id": child, "name": "Ioana", "age_months": 71, "disorder": "SIGMATISM", "therapy_group": "CLASSICAL"});
    let reply = send_json(&app, "POST", "/children", &update).await;
    let direct = mirror
        .upsert_child(serde_json::from_value(update).unwrap())
        .and_then(|id| mirror.child(&id).cloned());
    check!("update child", reply, direct, 200);
    let bad = json!({"name": "X", "age_months": 50, "disorder": "LAMBDACISM", "therapy_group": "ASSISTED"});
    let reply = send_json(&app, "POST", "/children", &bad).await;
    check!("bad disorder", reply, mirror.upsert_child(serde_json::from_value(bad).unwrap()), 201);

    // uploads
    let reply = send(&app, "POST", &format!("/children/{child}/sessions?phase=THERAPY"), &[("content-type", "audio/wav")], three_bursts()).await;
    check!("raw upload", reply, mirror.ingest_session(child, three_bursts(), Phase::Therapy, &seg_cfg, NOW), 201);
    let ct = format!("multipart/form-data; boundary={BOUNDARY}");
    let reply = send(&app, "POST", &format!("/children/{child}/sessions"), &[("content-type", &ct)], multipart(Some("post_test"), two_bursts())).await;
    check!("multipart upload", reply, mirror.ingest_session(child, two_bursts(), Phase::PostTest, &seg_cfg, NOW), 201);
    let reply = send(&app, "POST", &format!("/children/{child}/sessions?phase=PRE_TEST"), &[], &b"not a wav"[..]).await;
    check!("garbage upload", reply, mirror.ingest_session(child, b"not a wav", Phase::PreTest, &seg_cfg, NOW), 201);
    let reply = send(&app, "POST", "/children/nobody/sessions?phase=PRE_TEST", &[], three_bursts()).await;
    check!("upload for unknown child", reply, mirror.ingest_session("nobody", three_bursts(), Phase::PreTest, &seg_cfg, NOW), 201);
    let reply = send(&app, "POST", &format!("/children/{child}/sessions?phase=LATER"), &[], three_bursts()).await;
    check!("bad phase", reply, "LATER".parse::<Phase>(), 201);

    // evaluations
    let body = json!({"expected_sound": "s", "probe": "sanie", "score": 3});
    let reply = send_json(&app, "PUT", &format!("/segments/{seg}/evaluation"), &body).await;
    let direct = mirror.record_evaluation(Evaluation { segment_id: seg.clone(), expected_sound: "s".into(), probe: "sanie".into(), score: 3 });
    check!("evaluation", reply, direct, 200);
    let body = json!({"expected_sound": "s", "probe": "sanie", "score": 5});
    let reply = send_json(&app, "PUT", &format!("/segments/{seg}/evaluation"), &body).await;
    let direct = mirror.record_evaluation(Evaluation { segment_id: seg.clone(), expected_sound: "s".into(), probe: "sanie".into(), score: 5 });
    check!("score out of range", reply, direct, 200);

    // suggestions and overrides
    let reply = get(&app, &format!("/children/{child}/suggestion")).await;
    let fresh = mirror.suggest_for_child(child, NOW);
    let fresh_id = fresh.as_ref().map(|s| s.id.clone()).unwrap_or_default();
    check!("child suggestion", reply, fresh, 200);
    let reply = get(&app, &format!("/children/{}/suggestion", seed.fresh_child)).await;
    check!("suggestion without evaluations", reply, mirror.suggest_for_child(&seed.fresh_child, NOW), 200);
    let reply = send_json(&app, "POST", &format!("/suggestions/{fresh_id}/override"), &json!({"difficulty": 5.0})).await;
    let ov = Override { suggestion_id: fresh_id.clone(), difficulty: Some(5.0), dosage: None };
    check!("override", reply, mirror.apply_override(&ov, &learning, NOW), 201);
    let reply = send_json(&app, "POST", &format!("/suggestions/{fresh_id}/override"), &json!({"dosage": 40.0})).await;
    let ov = Override { suggestion_id: fresh_id.clone(), difficulty: None, dosage: Some(40.0) };
    check!("invalid override", reply, mirror.apply_override(&ov, &learning, NOW), 201);
    let reply = send_json(&app, "POST", "/suggestions/sug-404/override", &json!({"difficulty": 2.0})).await;
    let ov = Override { suggestion_id: "sug-404".into(), difficulty: Some(2.0), dosage: None };
    check!("override of unknown suggestion", reply, mirror.apply_override(&ov, &learning, NOW), 201);

    // knowledge base
    let mut kb = mirror.kb().clone();
    kb.set_weight(2, 0.25);
    let reply = send(&app, "PUT", "/kb", &[("content-type", "text/plain")], kb.to_fcl()).await;
    let direct = mirror.replace_kb(&kb.to_fcl()).map(|k| k.to_fcl());
    if reply.status != StatusCode::OK || Ok(reply.text()) != direct {
        return Err("PUT /kb differs".into());
    }
    checked += 1;
    let broken = "FUNCTION_BLOCK x\nVAR_INPUT a : REAL; END_VAR\nFUZZIFY a TERM t := (0, 0) (1, 1) END_FUZZIFY\n";
    let reply = send(&app, "PUT", "/kb", &[], broken).await;
    check!("broken kb", reply, mirror.replace_kb(broken).map(|_| ()), 200);
    // an override against a suggestion made before a structural change is stale
    let mut pruned = mirror.kb().clone();
    pruned.rule_blocks[0].rules.pop();
    let reply = send(&app, "PUT", "/kb", &[], pruned.to_fcl()).await;
    let direct = mirror.replace_kb(&pruned.to_fcl()).map(|k| k.to_fcl());
    if reply.status != StatusCode::OK || Ok(reply.text()) != direct {
        return Err("PUT /kb (pruned) differs".into());
    }
    let reply = send_json(&app, "POST", &format!("/suggestions/{fresh_id}/override"), &json!({"difficulty": 1.0})).await;
    let ov = Override { suggestion_id: fresh_id, difficulty: Some(1.0), dosage: None };
    check!("stale override", reply, mirror.apply_override(&ov, &learning, NOW), 201);

    // exercises
    let reply = send(&app, "POST", "/assets", &[], &b"\x89PNG picture"[..]).await;
    check!("asset", reply, mirror.put_asset(b"\x89PNG picture").map(|h| json!({"asset": h})), 201);
    let asset = reply.json()["asset"].as_str().unwrap_or_default().to_string();
    let manifest = json!({"target_sound": "r", "difficulty": 3, "items": [{"kind": "IMAGE", "asset": asset, "caption": "rac"}]});
    let reply = send_json(&app, "POST", "/exercises", &manifest).await;
    check!("exercise", reply, mirror.put_exercise(serde_json::from_value(manifest).unwrap()), 201);
    let missing = json!({"target_sound": "r", "difficulty": 3, "items": [{"kind": "IMAGE", "asset": "00ff", "caption": "rac"}]});
    let reply = send_json(&app, "POST", "/exercises", &missing).await;
    check!("exercise with unknown asset", reply, mirror.put_exercise(serde_json::from_value(missing).unwrap()), 201);

    check!("report after writes", get(&app, "/report/cohort").await, Ok::<_, StoreError>(mirror.cohort_report()), 200);
    if !state.read(|s| s.audit().is_clean()) {
        return Err("audit failed after the façade run".into());
    }
    Ok(checked)
}

fn word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..12);
    (0..n).map(|_| *b"abcxyz-_ 09`\"".choose(rng).unwrap() as char).collect()
}

pub fn random_codec_error(rng: &mut ChaCha8Rng) -> CodecError {
    match rng.gen_range(0..4) {
        0 => CodecError::MalformedBlock(word(rng)),
        1 => CodecError::MalformedWav(word(rng)),
        2 => CodecError::UnsupportedFormat(word(rng)),
        _ => CodecError::InvalidSampleRate,
    }
}

pub fn random_fcl_error(rng: &mut ChaCha8Rng) -> FclError {
    let line = rng.gen_range(1..500);
    match rng.gen_range(0..5) {
        0 => FclError::SyntaxError { line, column: rng.gen_range(1..80), message: word(rng) },
        1 => FclError::UnknownVariable { name: word(rng), line },
        2 => FclError::UnknownTerm { variable: word(rng), term: word(rng), line },
        3 => FclError::NonMonotonePoints { variable: word(rng), term: word(rng), line },
        _ => FclError::Invalid { line, message: word(rng) },
    }
}

pub fn random_therapy_error(rng: &mut ChaCha8Rng) -> TherapyError {
    match rng.gen_range(0..9) {
        0 => TherapyError::EmptyScores,
        1 => TherapyError::ScoreOutOfRange(rng.gen()),
        2 => TherapyError::InputOutOfRange { name: "severity", value: rng.gen_range(-1e6..1e6) },
        3 => TherapyError::KbMismatch(word(rng)),
        4 => TherapyError::Inference(InferenceError::MissingInput(word(rng))),
        5 => TherapyError::Inference(InferenceError::NonFiniteInput { name: word(rng), value: f64::NAN }),
        6 => TherapyError::StaleSuggestion,
        7 => TherapyError::InvalidOverride(word(rng)),
        _ => TherapyError::InvalidLearningConfig(word(rng)),
    }
}

pub fn random_store_error(rng: &mut ChaCha8Rng) -> StoreError {
    match rng.gen_range(0..17) {
        0 => StoreError::InvalidEnum { field: "phase", value: word(rng) },
        1 => StoreError::InvalidRecord(word(rng)),
        2 => StoreError::UnknownChild(word(rng)),
        3 => StoreError::UnknownSession(word(rng)),
        4 => StoreError::UnknownSegment(word(rng)),
        5 => StoreError::UnknownSuggestion(word(rng)),
        6 => StoreError::UnknownExercise(word(rng)),
        7 => StoreError::UnknownAsset(word(rng)),
        8 => StoreError::ScoreOutOfRange(rng.gen()),
        9 => StoreError::NoEvaluations(word(rng)),
        10 => StoreError::Codec(random_codec_error(rng)),
        11 => StoreError::Segmentation(match rng.gen_range(0..3) {
            0 => SegmentationError::UnsupportedRate(rng.gen()),
            1 => SegmentationError::UnpairedEndMarker { position: rng.gen() },
            _ => SegmentationError::InvalidConfig(word(rng)),
        }),
        12 => StoreError::Therapy(random_therapy_error(rng)),
        13 => StoreError::Fcl(random_fcl_error(rng)),
        14 => StoreError::CorruptSnapshot(word(rng)),
        15 => StoreError::MissingBlob(word(rng)),
        _ => StoreError::Io(word(rng)),
    }
}

/// Maps `n` random module errors and checks each lands on a documented
/// `(status, code)` with a well-formed body. Returns the codes reached.
pub fn mapping_is_total(seed: u64, n: usize) -> Result<std::collections::BTreeSet<&'static str>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..n {
        let err = random_store_error(&mut rng);
        let shown = err.to_string();
        let api: ApiError = err.clone().into();
        if !ERROR_CODES.contains(&(api.code, api.status)) {
            return Err(format!("{err:?} mapped to undocumented ({}, {})", api.status, api.code));
        }
        if api.message != shown {
            return Err(format!("{err:?}: message `{}` is not `{shown}`", api.message));
        }
        let fcl = matches!(err, StoreError::Fcl(_));
        if api.line.is_some() != fcl {
            return Err(format!("{err:?}: line {:?}", api.line));
        }
        let body = serde_json::to_value(&api).unwrap();
        if body["code"] != api.code || body["message"] != api.message.as_str() {
            return Err(format!("{err:?}: body {body}"));
        }
        seen.insert(api.code);
    }
    Ok(seen)
}
