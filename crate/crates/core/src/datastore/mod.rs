//! Persistence for children, sessions, evaluations, suggestions, exercises
//! and the therapy knowledge base.
//!
//! A [`Store`] is a plain value: every mutation takes `&mut self`, so the
//! borrow checker already gives the single-writer / many-readers contract
//! inside one thread. Servers share it behind a `RwLock`.
//!
//! On disk a store is a directory holding `store.json` (see [`snapshot`])
//! plus content-addressed blobs under `audio/` and `assets/`.

mod blobs;
mod model;
mod report;
mod snapshot;

pub use blobs::{sha256_hex, BlobKind, BlobStore};
pub use model::{
    ChildDraft, ChildRecord, Disorder, Evaluation, ExerciseBundle, ExerciseItem,
    ExerciseManifest, ItemKind, OverrideRecord, Phase, SegmentRecord, SegmentView, Session,
    SessionFlag, TherapyGroup,
};
pub use report::{CohortCell, CohortReport, CSV_HEADER};
pub use snapshot::SNAPSHOT_FILE;

use std::collections::BTreeMap;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{wav_read, wav_write, CodecError, WavFormat};
use crate::fcl::{parse_fcl, FclError, FuzzySystem};
use crate::segmentation::{
    detect_markers, marker_regions, segment_stream, SegmentationError, SegmenterConfig,
};
use crate::therapy::{
    self, apply_override, default_kb, LearningConfig, Override, TherapyError, TherapySuggestion,
};
use model::check_id;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("invalid {field} `{value}`")]
    InvalidEnum { field: &'static str, value: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("unknown child `{0}`")]
    UnknownChild(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("unknown segment `{0}`")]
    UnknownSegment(String),
    #[error("unknown suggestion `{0}`")]
    UnknownSuggestion(String),
    #[error("unknown exercise `{0}`")]
    UnknownExercise(String),
    #[error("unknown asset `{0}`")]
    UnknownAsset(String),
    #[error("score {0} outside 0..=3")]
    ScoreOutOfRange(u8),
    #[error("child `{0}` has no evaluated segments")]
    NoEvaluations(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Therapy(#[from] TherapyError),
    #[error(transparent)]
    Fcl(#[from] FclError),
    #[error("corrupt snapshot: {0}")]
    CorruptSnapshot(String),
    #[error("missing blob {0}")]
    MissingBlob(String),
    #[error("i/o error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Counters {
    child: u64,
    session: u64,
    segment: u64,
    suggestion: u64,
    r#override: u64,
    exercise: u64,
}

/// Everything that goes into a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct State {
    counters: Counters,
    kb: String,
    children: BTreeMap<String, ChildRecord>,
    sessions: BTreeMap<String, Session>,
    evaluations: BTreeMap<String, Evaluation>,
    suggestions: BTreeMap<String, TherapySuggestion>,
    overrides: BTreeMap<String, OverrideRecord>,
    exercises: BTreeMap<String, ExerciseManifest>,
}

impl Default for State {
    fn default() -> Self {
        Self {
            counters: Counters::default(),
            kb: default_kb().to_fcl(),
            children: BTreeMap::new(),
            sessions: BTreeMap::new(),
            evaluations: BTreeMap::new(),
            suggestions: BTreeMap::new(),
            overrides: BTreeMap::new(),
            exercises: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Store {
    state: State,
    kb: FuzzySystem,
    /// segment id -> session id
    segment_index: BTreeMap<String, String>,
    blobs: BlobStore,
}

impl PartialEq for Store {
    fn eq(&self, other: &Self) -> bool {
        self.state == other.state
    }
}

/// Problems found by [`Store::audit`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub issues: Vec<String>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

fn next_id(counter: &mut u64, prefix: &str, taken: impl Fn(&str) -> bool) -> String {
    loop {
        *counter += 1;
        let id = format!("{prefix}-{:06}", *counter);
        if !taken(&id) {
            return id;
        }
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Self::from_parts(State::default(), BlobStore::default())
            .expect("default state is consistent")
    }

    fn from_parts(state: State, blobs: BlobStore) -> Result<Self, StoreError> {
        let kb = parse_fcl(&state.kb)?;
        let mut segment_index = BTreeMap::new();
        for s in state.sessions.values() {
            for seg in &s.segments {
                segment_index.insert(seg.id.clone(), s.id.clone());
            }
        }
        Ok(Self {
            state,
            kb,
            segment_index,
            blobs,
        })
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    // ---- children ----

    /// Inserts a new child or replaces every field of an existing one.
    pub fn upsert_child(&mut self, draft: ChildDraft) -> Result<String, StoreError> {
        let disorder = draft.disorder.parse()?;
        let therapy_group = draft.therapy_group.parse()?;
        let name = draft.name.trim();
        if name.is_empty() {
            return Err(StoreError::InvalidRecord("child name is empty".into()));
        }
        let id = match draft.id {
            Some(id) => {
                check_id("child", &id)?;
                id
            }
            None => {
                let children = &self.state.children;
                next_id(&mut self.state.counters.child, "chd", |id| {
                    children.contains_key(id)
                })
            }
        };
        self.state.children.insert(
            id.clone(),
            ChildRecord {
                id: id.clone(),
                name: name.to_string(),
                age_months: draft.age_months,
                disorder,
                therapy_group,
            },
        );
        Ok(id)
    }

    pub fn child(&self, id: &str) -> Result<&ChildRecord, StoreError> {
        self.state
            .children
            .get(id)
            .ok_or_else(|| StoreError::UnknownChild(id.to_string()))
    }

    pub fn children(&self) -> impl Iterator<Item = &ChildRecord> {
        self.state.children.values()
    }

    // ---- sessions ----

    /// Decodes an uploaded recording, finds its markers, segments the marked
    /// regions and stores both the original file and the result.
    pub fn ingest_session(
        &mut self,
        child_id: &str,
        wav: &[u8],
        phase: Phase,
        cfg: &SegmenterConfig,
        now: i64,
    ) -> Result<Session, StoreError> {
        self.child(child_id)?;
        let pcm = wav_read(wav)?;
        let markers = detect_markers(&pcm);
        let regions = marker_regions(&markers, pcm.len(), pcm.sample_rate())?;
        let segments = segment_stream(&pcm, &markers, cfg)?;
        let hash = self.blobs.put(BlobKind::Audio, wav)?;

        let sessions = &self.state.sessions;
        let id = next_id(&mut self.state.counters.session, "ses", |id| {
            sessions.contains_key(id)
        });
        let segments: Vec<SegmentRecord> = segments
            .into_iter()
            .map(|s| {
                let index = &self.segment_index;
                SegmentRecord {
                    id: next_id(&mut self.state.counters.segment, "seg", |id| {
                        index.contains_key(id)
                    }),
                    start: s.start,
                    end: s.end,
                }
            })
            .collect();
        for seg in &segments {
            self.segment_index.insert(seg.id.clone(), id.clone());
        }
        let session = Session {
            id: id.clone(),
            child_id: child_id.to_string(),
            phase,
            audio: BlobKind::Audio.relative_path(&hash),
            sample_rate: pcm.sample_rate(),
            num_samples: pcm.len(),
            markers,
            segments,
            flags: if regions.is_empty() {
                vec![SessionFlag::NoMarkerPairs]
            } else {
                Vec::new()
            },
            created_at: now,
        };
        self.state.sessions.insert(id, session.clone());
        Ok(session)
    }

    pub fn session(&self, id: &str) -> Result<&Session, StoreError> {
        self.state
            .sessions
            .get(id)
            .ok_or_else(|| StoreError::UnknownSession(id.to_string()))
    }

    pub(crate) fn sessions_iter(&self) -> impl Iterator<Item = &Session> {
        self.state.sessions.values()
    }

    /// A child's sessions in creation order.
    pub fn sessions_for_child(&self, child_id: &str) -> Result<Vec<&Session>, StoreError> {
        self.child(child_id)?;
        Ok(self
            .state
            .sessions
            .values()
            .filter(|s| s.child_id == child_id)
            .collect())
    }

    fn view(&self, session: &Session, seg: &SegmentRecord) -> SegmentView {
        let ms = |n: usize| n as f64 * 1000.0 / f64::from(session.sample_rate);
        SegmentView {
            id: seg.id.clone(),
            session_id: session.id.clone(),
            start: seg.start,
            end: seg.end,
            start_ms: ms(seg.start),
            end_ms: ms(seg.end),
            evaluation: self.state.evaluations.get(&seg.id).cloned(),
        }
    }

    pub fn session_segments(&self, session_id: &str) -> Result<Vec<SegmentView>, StoreError> {
        let s = self.session(session_id)?;
        Ok(s.segments.iter().map(|seg| self.view(s, seg)).collect())
    }

    fn locate(&self, segment_id: &str) -> Result<(&Session, &SegmentRecord), StoreError> {
        let unknown = || StoreError::UnknownSegment(segment_id.to_string());
        let session = self
            .segment_index
            .get(segment_id)
            .and_then(|sid| self.state.sessions.get(sid))
            .ok_or_else(unknown)?;
        let seg = session
            .segments
            .iter()
            .find(|s| s.id == segment_id)
            .ok_or_else(unknown)?;
        Ok((session, seg))
    }

    pub fn segment(&self, segment_id: &str) -> Result<SegmentView, StoreError> {
        let (session, seg) = self.locate(segment_id)?;
        Ok(self.view(session, seg))
    }

    /// The segment's samples as a PCM16 WAV file.
    pub fn segment_audio(&self, segment_id: &str) -> Result<Vec<u8>, StoreError> {
        let (session, seg) = self.locate(segment_id)?;
        let pcm = wav_read(&self.session_audio(session)?)?;
        Ok(wav_write(&pcm.slice(seg.start, seg.end), WavFormat::Pcm16))
    }

    /// The session's original upload.
    pub fn session_audio(&self, session: &Session) -> Result<Vec<u8>, StoreError> {
        let hash = audio_hash(&session.audio)
            .ok_or_else(|| StoreError::MissingBlob(session.audio.clone()))?;
        self.blobs.get(BlobKind::Audio, hash)
    }

    // ---- evaluations ----

    /// Stores the evaluation of a segment, replacing any earlier one.
    pub fn record_evaluation(&mut self, evaluation: Evaluation) -> Result<Evaluation, StoreError> {
        self.locate(&evaluation.segment_id)?;
        if evaluation.score > therapy::MAX_SCORE {
            return Err(StoreError::ScoreOutOfRange(evaluation.score));
        }
        self.state
            .evaluations
            .insert(evaluation.segment_id.clone(), evaluation.clone());
        Ok(evaluation)
    }

    pub fn evaluation(&self, segment_id: &str) -> Option<&Evaluation> {
        self.state.evaluations.get(segment_id)
    }

    /// Scores of each of the child's sessions that has at least one
    /// evaluated segment, oldest first.
    pub fn evaluated_scores(&self, child_id: &str) -> Result<Vec<(String, Vec<u8>)>, StoreError> {
        Ok(self
            .sessions_for_child(child_id)?
            .into_iter()
            .filter_map(|s| {
                let scores: Vec<u8> = s
                    .segments
                    .iter()
                    .filter_map(|seg| self.evaluation(&seg.id).map(|e| e.score))
                    .collect();
                (!scores.is_empty()).then(|| (s.id.clone(), scores))
            })
            .collect())
    }

    // ---- knowledge base and suggestions ----

    pub fn kb(&self) -> &FuzzySystem {
        &self.kb
    }

    /// Canonical FCL text of the current knowledge base.
    pub fn kb_text(&self) -> &str {
        &self.state.kb
    }

    /// Parses `text` and swaps it in; on error the current base is kept.
    pub fn replace_kb(&mut self, text: &str) -> Result<&FuzzySystem, StoreError> {
        let kb = parse_fcl(text)?;
        self.set_kb(kb);
        Ok(&self.kb)
    }

    fn set_kb(&mut self, kb: FuzzySystem) {
        self.state.kb = kb.to_fcl();
        self.kb = kb;
    }

    /// Suggestion for a child from its two most recent evaluated sessions:
    /// severity from the latest, progress from the change since the one
    /// before. The suggestion is stored so it can be overridden later.
    pub fn suggest_for_child(&mut self, child_id: &str, now: i64) -> Result<TherapySuggestion, StoreError> {
        let scored = self.evaluated_scores(child_id)?;
        let (_, latest) = scored
            .last()
            .ok_or_else(|| StoreError::NoEvaluations(child_id.to_string()))?;
        let previous = scored.len().checked_sub(2).map(|i| scored[i].1.as_slice());
        let severity = therapy::severity_from_scores(latest)?;
        let progress = therapy::progress_between(previous, latest)?;
        let mut suggestion = therapy::suggest(&self.kb, child_id, severity, progress, now)?;
        let taken = &self.state.suggestions;
        suggestion.id = next_id(&mut self.state.counters.suggestion, "sug", |id| {
            taken.contains_key(id)
        });
        self.state
            .suggestions
            .insert(suggestion.id.clone(), suggestion.clone());
        Ok(suggestion)
    }

    pub fn suggestion(&self, id: &str) -> Result<&TherapySuggestion, StoreError> {
        self.state
            .suggestions
            .get(id)
            .ok_or_else(|| StoreError::UnknownSuggestion(id.to_string()))
    }

    /// Applies a therapist's correction to the knowledge base weights and
    /// logs it.
    pub fn apply_override(
        &mut self,
        correction: &Override,
        cfg: &LearningConfig,
        now: i64,
    ) -> Result<OverrideRecord, StoreError> {
        let suggestion = self.suggestion(&correction.suggestion_id)?;
        let (kb, changes) = apply_override(&self.kb, suggestion, correction, cfg)?;
        self.set_kb(kb);
        let taken = &self.state.overrides;
        let id = next_id(&mut self.state.counters.r#override, "ovr", |id| {
            taken.contains_key(id)
        });
        let record = OverrideRecord {
            id: id.clone(),
            suggestion_id: correction.suggestion_id.clone(),
            difficulty: correction.difficulty,
            dosage: correction.dosage,
            changes,
            timestamp: now,
        };
        self.state.overrides.insert(id, record.clone());
        Ok(record)
    }

    pub fn overrides(&self) -> impl Iterator<Item = &OverrideRecord> {
        self.state.overrides.values()
    }

    // ---- exercises ----

    /// Stores an exercise asset and returns its reference.
    pub fn put_asset(&mut self, bytes: &[u8]) -> Result<String, StoreError> {
        self.blobs.put(BlobKind::Asset, bytes)
    }

    /// Creates (empty id) or replaces an exercise manifest.
    pub fn put_exercise(&mut self, mut manifest: ExerciseManifest) -> Result<ExerciseManifest, StoreError> {
        if manifest.items.is_empty() {
            return Err(StoreError::InvalidRecord("exercise has no items".into()));
        }
        if !(1..=5).contains(&manifest.difficulty) {
            return Err(StoreError::InvalidRecord(format!(
                "exercise difficulty {} outside 1..=5",
                manifest.difficulty
            )));
        }
        if let Some(item) = manifest
            .items
            .iter()
            .find(|i| !self.blobs.contains(BlobKind::Asset, &i.asset))
        {
            return Err(StoreError::UnknownAsset(item.asset.clone()));
        }
        if manifest.id.is_empty() {
            let taken = &self.state.exercises;
            manifest.id = next_id(&mut self.state.counters.exercise, "exr", |id| {
                taken.contains_key(id)
            });
        } else {
            check_id("exercise", &manifest.id)?;
        }
        self.state
            .exercises
            .insert(manifest.id.clone(), manifest.clone());
        Ok(manifest)
    }

    pub fn exercise(&self, id: &str) -> Result<&ExerciseManifest, StoreError> {
        self.state
            .exercises
            .get(id)
            .ok_or_else(|| StoreError::UnknownExercise(id.to_string()))
    }

    pub fn exercises(&self) -> impl Iterator<Item = &ExerciseManifest> {
        self.state.exercises.values()
    }

    pub fn exercise_bundle(&self, id: &str) -> Result<ExerciseBundle, StoreError> {
        let manifest = self.exercise(id)?.clone();
        let mut assets = BTreeMap::new();
        for item in &manifest.items {
            let bytes = self.blobs.get(BlobKind::Asset, &item.asset)?;
            assets.insert(
                item.asset.clone(),
                base64::engine::general_purpose::STANDARD.encode(bytes),
            );
        }
        Ok(ExerciseBundle { manifest, assets })
    }

    // ---- integrity ----

    /// Checks referential integrity and the segment invariants over the
    /// whole store.
    pub fn audit(&self) -> AuditReport {
        let mut issues = Vec::new();
        let s = &self.state;
        for (key, c) in &s.children {
            if key != &c.id {
                issues.push(format!("child key {key} holds id {}", c.id));
            }
        }
        let mut seen_segments = BTreeMap::new();
        for (key, session) in &s.sessions {
            if key != &session.id {
                issues.push(format!("session key {key} holds id {}", session.id));
            }
            if !s.children.contains_key(&session.child_id) {
                issues.push(format!("session {key} refers to missing child {}", session.child_id));
            }
            match audio_hash(&session.audio) {
                Some(h) if self.blobs.contains(BlobKind::Audio, h) => {}
                _ => issues.push(format!("session {key} audio {} is missing", session.audio)),
            }
            let mut prev_end = 0;
            for seg in &session.segments {
                if seg.start >= seg.end || seg.end > session.num_samples || seg.start < prev_end {
                    issues.push(format!("segment {} has bad bounds", seg.id));
                }
                prev_end = seg.end;
                if seen_segments.insert(seg.id.clone(), key.clone()).is_some() {
                    issues.push(format!("segment id {} is used twice", seg.id));
                }
            }
        }
        if seen_segments != self.segment_index {
            issues.push("segment index is out of date".into());
        }
        for (key, ev) in &s.evaluations {
            if key != &ev.segment_id || !seen_segments.contains_key(key) {
                issues.push(format!("evaluation {key} has no segment"));
            }
            if ev.score > therapy::MAX_SCORE {
                issues.push(format!("evaluation {key} score {} out of range", ev.score));
            }
        }
        for (key, sug) in &s.suggestions {
            if !s.children.contains_key(&sug.child_id) {
                issues.push(format!("suggestion {key} refers to missing child {}", sug.child_id));
            }
        }
        for (key, o) in &s.overrides {
            if !s.suggestions.contains_key(&o.suggestion_id) {
                issues.push(format!("override {key} refers to missing suggestion {}", o.suggestion_id));
            }
        }
        for (key, ex) in &s.exercises {
            if ex.items.is_empty() || !(1..=5).contains(&ex.difficulty) {
                issues.push(format!("exercise {key} is invalid"));
            }
            for item in &ex.items {
                if !self.blobs.contains(BlobKind::Asset, &item.asset) {
                    issues.push(format!("exercise {key} asset {} is missing", item.asset));
                }
            }
        }
        if parse_fcl(&s.kb).map(|kb| kb != self.kb).unwrap_or(true) {
            issues.push("knowledge base text does not match the loaded base".into());
        }
        for w in self.kb.rules().map(|r| r.weight) {
            if !(0.0..=1.0).contains(&w) {
                issues.push(format!("rule weight {w} outside [0, 1]"));
            }
        }
        AuditReport { issues }
    }
}

/// `audio/<hash>.wav` -> `<hash>`
fn audio_hash(path: &str) -> Option<&str> {
    path.strip_prefix("audio/")?.strip_suffix(".wav")
}
