use std::sync::OnceLock;

use logoped_core::codec::{wav_write, AdpcmLayout};
use logoped_core::datastore::*;
use logoped_core::therapy::{LearningConfig, Override};
use logoped_core::{SegmenterConfig, WavFormat};
use logoped_testkit::corpus::simple_session;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Marked recording with three well separated bursts, stored as IMA-ADPCM.
fn three_bursts() -> &'static [u8] {
    static WAV: OnceLock<Vec<u8>> = OnceLock::new();
    WAV.get_or_init(|| {
        let s = simple_session(1, -40.0, &[(300.0, 250.0, 20.0), (1100.0, 300.0, 18.0), (2000.0, 350.0, 15.0)], 2700.0);
        wav_write(&s.pcm, WavFormat::ImaAdpcm(AdpcmLayout::default()))
    })
}

fn two_bursts() -> &'static [u8] {
    static WAV: OnceLock<Vec<u8>> = OnceLock::new();
    WAV.get_or_init(|| {
        let s = simple_session(2, -40.0, &[(300.0, 400.0, 20.0), (1300.0, 300.0, 15.0)], 2000.0);
        wav_write(&s.pcm, WavFormat::Pcm16)
    })
}

fn unmarked() -> Vec<u8> {
    wav_write(&logoped_core::PcmBuffer::new(logoped_testkit::sine(300.0, 8000.0, 8000, 16_000), 16_000).unwrap(), WavFormat::Pcm16)
}

fn cfg() -> SegmenterConfig {
    SegmenterConfig::default()
}

fn eval(segment_id: &str, score: u8) -> Evaluation {
    Evaluation { segment_id: segment_id.into(), expected_sound: "r".into(), probe: "rac".into(), score }
}

#[test]
fn two_burst_fixture_gives_two_segments() {
    let mut s = Store::in_memory();
    let id = s.upsert_child(ChildDraft::new("Ioana", 70, Disorder::Sigmatism, TherapyGroup::Classical)).unwrap();
    let session = s.ingest_session(&id, two_bursts(), Phase::PreTest, &cfg(), 1).unwrap();
    assert_eq!(session.segments.len(), 2);
    assert!(session.flags.is_empty());
    assert_eq!(session.audio, format!("audio/{}.wav", sha256_hex(two_bursts())));
    let views = s.session_segments(&session.id).unwrap();
    assert!(views.iter().all(|v| v.evaluation.is_none() && v.start < v.end));
    let audio = logoped_core::codec::wav_read(&s.segment_audio(&views[0].id).unwrap()).unwrap();
    assert_eq!(audio.len(), views[0].end - views[0].start);

    let flat = s.ingest_session(&id, &unmarked(), Phase::Therapy, &cfg(), 2).unwrap();
    assert!(flat.segments.is_empty());
    assert_eq!(flat.flags, vec![SessionFlag::NoMarkerPairs]);

    assert!(matches!(s.ingest_session("nobody", two_bursts(), Phase::PreTest, &cfg(), 3), Err(StoreError::UnknownChild(_))));
    assert!(matches!(s.ingest_session(&id, b"garbage", Phase::PreTest, &cfg(), 3), Err(StoreError::Codec(_))));
}

#[test]
fn evaluation_replace_and_score_limit() {
    let mut s = Store::in_memory();
    let id = s.upsert_child(ChildDraft::new("Ioana", 70, Disorder::Sigmatism, TherapyGroup::Classical)).unwrap();
    let session = s.ingest_session(&id, two_bursts(), Phase::PreTest, &cfg(), 1).unwrap();
    let seg = &session.segments[0].id;
    assert_eq!(s.record_evaluation(eval(seg, 2)).unwrap(), eval(seg, 2));
    assert_eq!(s.evaluation(seg), Some(&eval(seg, 2)));
    s.record_evaluation(eval(seg, 1)).unwrap();
    assert_eq!(s.segment(seg).unwrap().evaluation, Some(eval(seg, 1)));
    assert!(matches!(s.record_evaluation(eval(seg, 4)), Err(StoreError::ScoreOutOfRange(4))));
    assert!(matches!(s.record_evaluation(eval("seg-999999", 1)), Err(StoreError::UnknownSegment(_))));
}

// ---- cohort report ----

/// Cell order of the report: every disorder with CLASSICAL, then ASSISTED.
fn cells() -> Vec<(Disorder, TherapyGroup)> {
    Disorder::ALL.iter().flat_map(|&d| TherapyGroup::ALL.iter().map(move |&g| (d, g))).collect()
}

struct Planned {
    child: ChildDraft,
    /// (phase, scores given to the first segments)
    sessions: Vec<(Phase, Vec<u8>)>,
}

/// 15 children per cell. Pre-test scores of child j in cell c are
/// `(j + k + c) % 4` over 2 or 3 segments, post-test scores
/// `min(3, (j + k + c) % 4 + 1)` over 2 or 3 segments. Child 13 of cell 2 has
/// no evaluated pre-test, child 14 of cell 5 no post-test session, and child
/// 0 of every cell an all-zero THERAPY session that must be ignored.
fn cohort_plan() -> Vec<Planned> {
    let mut plan = Vec::new();
    for (c, (d, g)) in cells().into_iter().enumerate() {
        for j in 0..15usize {
            let child = ChildDraft::new(&format!("child {c}-{j}"), 48 + j as u16, d, g).with_id(&format!("c{c}-{j:02}"));
            let mut sessions = Vec::new();
            let n_pre = 2 + j % 2;
            let pre = (0..n_pre).map(|k| ((j + k + c) % 4) as u8).collect();
            sessions.push((Phase::PreTest, if c == 2 && j == 13 { Vec::new() } else { pre }));
            if !(c == 5 && j == 14) {
                let n_post = if j % 3 == 0 { 2 } else { 3 };
                sessions.push((Phase::PostTest, (0..n_post).map(|k| (((j + k + c) % 4) as u8 + 1).min(3)).collect()));
            }
            if j == 0 {
                sessions.push((Phase::Therapy, vec![0, 0, 0]));
            }
            plan.push(Planned { child, sessions });
        }
    }
    plan
}

fn build(plan: &[Planned], shuffle: Option<u64>) -> Store {
    let mut store = Store::in_memory();
    let mut children: Vec<&Planned> = plan.iter().collect();
    let mut sessions: Vec<(&str, Phase, &[u8])> = plan
        .iter()
        .flat_map(|p| p.sessions.iter().map(move |(ph, sc)| (p.child.id.as_deref().unwrap(), *ph, sc.as_slice())))
        .collect();
    if let Some(seed) = shuffle {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        children.shuffle(&mut rng);
        sessions.shuffle(&mut rng);
    }
    for p in children {
        store.upsert_child(p.child.clone()).unwrap();
    }
    for (child, phase, scores) in sessions {
        let session = store.ingest_session(child, three_bursts(), phase, &cfg(), 0).unwrap();
        assert_eq!(session.segments.len(), 3);
        for (seg, &score) in session.segments.iter().zip(scores) {
            store.record_evaluation(eval(&seg.id, score)).unwrap();
        }
    }
    store
}

#[test]
fn cohort_report_matches_hand_computation() {
    let report = build(&cohort_plan(), None).cohort_report();
    // exact fractions (pre, post, delta) worked out by hand for the plan
    type Frac = (i64, i64);
    let expected: [(usize, Frac, Frac, Frac); 6] = [
        (15, (8, 5), (67, 30), (19, 30)),
        (15, (13, 9), (203, 90), (73, 90)),
        (15, (11, 7), (34, 15), (73, 105)),
        (15, (7, 5), (101, 45), (38, 45)),
        (15, (8, 5), (67, 30), (19, 30)),
        (15, (13, 9), (191, 84), (209, 252)),
    ];
    let q = |(n, d): (i64, i64)| Some(n as f64 / d as f64);
    for (cell, ((dis, grp), (n, pre, post, delta))) in report.cells.iter().zip(cells().into_iter().zip(expected)) {
        assert_eq!((cell.disorder, cell.group), (dis, grp));
        assert_eq!(cell.n, n);
        assert_eq!(cell.mean_pre, q(pre), "{dis} {grp}");
        assert_eq!(cell.mean_post, q(post), "{dis} {grp}");
        assert_eq!(cell.delta, q(delta), "{dis} {grp}");
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(csv.lines().nth(1).unwrap(), "SIGMATISM,CLASSICAL,15,1.6,2.2333333333333334,0.6333333333333333");
}

#[test]
fn cohort_report_ignores_insertion_order() {
    let plan = cohort_plan();
    let reference = build(&plan, None).cohort_report();
    for seed in [1, 2] {
        let shuffled = build(&plan, Some(seed)).cohort_report();
        assert_eq!(shuffled.to_csv(), reference.to_csv());
        assert_eq!(serde_json::to_vec(&shuffled).unwrap(), serde_json::to_vec(&reference).unwrap());
    }
}

#[test]
fn single_cell_delta_of_one() {
    let mut s = Store::in_memory();
    for i in 0..4 {
        let id = s.upsert_child(ChildDraft::new("x", 60, Disorder::Rotacism, TherapyGroup::Assisted)).unwrap();
        for (phase, score) in [(Phase::PreTest, 1), (Phase::PostTest, 2)] {
            let ses = s.ingest_session(&id, two_bursts(), phase, &cfg(), i).unwrap();
            for seg in &ses.segments {
                s.record_evaluation(eval(&seg.id, score)).unwrap();
            }
        }
    }
    let cell = s.cohort_report().cell(Disorder::Rotacism, TherapyGroup::Assisted).clone();
    assert_eq!((cell.n, cell.mean_pre, cell.mean_post, cell.delta), (4, Some(1.0), Some(2.0), Some(1.0)));
}

// ---- snapshots ----

/// Every read the store offers, as one JSON document.
fn observe(s: &Store, suggestion_ids: &[String]) -> Value {
    let mut children = Vec::new();
    for c in s.children() {
        let sessions = s.sessions_for_child(&c.id).unwrap();
        let mut segs = Vec::new();
        for ses in &sessions {
            for v in s.session_segments(&ses.id).unwrap() {
                assert_eq!(s.segment(&v.id).unwrap(), v);
                segs.push(json!([v, sha256_hex(&s.segment_audio(&v.id).unwrap())]));
            }
            segs.push(json!(sha256_hex(&s.session_audio(ses).unwrap())));
        }
        children.push(json!({
            "child": s.child(&c.id).unwrap(),
            "sessions": sessions,
            "segments": segs,
            "scores": s.evaluated_scores(&c.id).unwrap(),
        }));
    }
    let suggestions: Vec<_> = suggestion_ids.iter().map(|id| s.suggestion(id).unwrap()).collect();
    let bundles: Vec<_> = s.exercises().map(|e| s.exercise_bundle(&e.id).unwrap()).collect();
    json!({
        "children": children,
        "kb": s.kb_text(),
        "kb_rules": s.kb().rules().map(|r| (r.id, r.weight)).collect::<Vec<_>>(),
        "suggestions": suggestions,
        "overrides": s.overrides().collect::<Vec<_>>(),
        "exercises": s.exercises().collect::<Vec<_>>(),
        "bundles": bundles,
        "report": s.cohort_report().to_csv(),
        "audit": s.audit(),
    })
}

#[test]
fn small_store_round_trips_through_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Store::open_dir(dir.path()).unwrap();
    let child = s.upsert_child(ChildDraft::new("Mihai", 66, Disorder::PolymorphDyslalia, TherapyGroup::Assisted)).unwrap();
    let ses = s.ingest_session(&child, two_bursts(), Phase::PreTest, &cfg(), 10).unwrap();
    s.record_evaluation(eval(&ses.segments[0].id, 1)).unwrap();
    let sug = s.suggest_for_child(&child, 11).unwrap();
    s.apply_override(&Override { suggestion_id: sug.id.clone(), difficulty: Some(5.0), dosage: None }, &LearningConfig::default(), 12).unwrap();
    let asset = s.put_asset(b"\x89PNG fake image").unwrap();
    s.put_exercise(ExerciseManifest {
        id: String::new(),
        target_sound: "s".into(),
        items: vec![ExerciseItem { kind: ItemKind::Image, asset, caption: "soare".into() }],
        difficulty: 2,
    })
    .unwrap();
    s.persist().unwrap();

    let back = Store::open_dir(dir.path()).unwrap();
    assert_eq!(back, s);
    assert_eq!(observe(&back, std::slice::from_ref(&sug.id)), observe(&s, &[sug.id]));
    assert_eq!(back.snapshot(), s.snapshot());
    assert!(back.audit().is_clean());
}

#[test]
fn corrupted_snapshot_on_disk_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Store::open_dir(dir.path()).unwrap();
    s.upsert_child(ChildDraft::new("Mihai", 66, Disorder::Rotacism, TherapyGroup::Classical)).unwrap();
    s.persist().unwrap();
    let path = dir.path().join(SNAPSHOT_FILE);
    let good = std::fs::read(&path).unwrap();
    let text = String::from_utf8(good.clone()).unwrap();
    // a plausible edit that keeps the JSON valid
    std::fs::write(&path, text.replace("Mihai", "Mihaj")).unwrap();
    assert!(matches!(Store::open_dir(dir.path()), Err(StoreError::CorruptSnapshot(_))));
    // truncation
    std::fs::write(&path, &good[..good.len() - 10]).unwrap();
    assert!(matches!(Store::open_dir(dir.path()), Err(StoreError::CorruptSnapshot(_))));
}

#[test]
fn deleted_audio_blob_fails_audit() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Store::open_dir(dir.path()).unwrap();
    let child = s.upsert_child(ChildDraft::new("Mihai", 66, Disorder::Rotacism, TherapyGroup::Classical)).unwrap();
    let ses = s.ingest_session(&child, two_bursts(), Phase::PreTest, &cfg(), 0).unwrap();
    assert!(s.audit().is_clean());
    std::fs::remove_file(dir.path().join(&ses.audio)).unwrap();
    assert!(!s.audit().is_clean());
}

// ---- randomized mutations ----

fn tweaked_kb(s: &Store, rng: &mut ChaCha8Rng) -> String {
    let mut kb = s.kb().clone();
    let ids: Vec<u32> = kb.rules().map(|r| r.id).collect();
    kb.set_weight(*ids.choose(rng).unwrap(), rng.gen_range(0.0..=1.0));
    kb.to_fcl()
}

#[test]
fn audit_stays_clean_under_random_mutations() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Store::open_dir(dir.path()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut suggestions: Vec<String> = Vec::new();
    let flat = unmarked();
    let (mut ok, mut rejected) = (0, 0);
    for step in 0..1000 {
        let children: Vec<String> = s.children().map(|c| c.id.clone()).collect();
        let segments: Vec<String> = children
            .iter()
            .flat_map(|c| s.sessions_for_child(c).unwrap())
            .flat_map(|ses| ses.segments.iter().map(|g| g.id.clone()))
            .collect();
        let before = s.snapshot();
        let pick = |rng: &mut ChaCha8Rng, v: &[String]| v.choose(rng).cloned().unwrap_or_else(|| "missing".into());
        let result: Result<(), StoreError> = match rng.gen_range(0..10) {
            0 | 1 => {
                let d = *Disorder::ALL.choose(&mut rng).unwrap();
                let g = *TherapyGroup::ALL.choose(&mut rng).unwrap();
                let mut draft = ChildDraft::new("kid", rng.gen_range(48..96), d, g);
                if rng.gen_bool(0.3) && !children.is_empty() {
                    draft = draft.with_id(&pick(&mut rng, &children));
                }
                if rng.gen_bool(0.05) {
                    draft.disorder = "LAMBDACISM".into();
                }
                s.upsert_child(draft).map(drop)
            }
            2 | 3 => {
                let wav: &[u8] = match rng.gen_range(0..6) {
                    0 => &flat,
                    1 => b"RIFF....",
                    _ => two_bursts(),
                };
                let child = if rng.gen_bool(0.9) { pick(&mut rng, &children) } else { "ghost".into() };
                let phase = *Phase::ALL.choose(&mut rng).unwrap();
                s.ingest_session(&child, wav, phase, &cfg(), step).map(drop)
            }
            4 | 5 => {
                let seg = if rng.gen_bool(0.95) { pick(&mut rng, &segments) } else { "seg-x".into() };
                s.record_evaluation(eval(&seg, rng.gen_range(0..=4))).map(drop)
            }
            6 => s.suggest_for_child(&pick(&mut rng, &children), step).map(|sug| suggestions.push(sug.id)),
            7 => {
                let ov = Override {
                    suggestion_id: pick(&mut rng, &suggestions),
                    difficulty: rng.gen_bool(0.7).then(|| rng.gen_range(0.5..5.5)),
                    dosage: rng.gen_bool(0.5).then(|| rng.gen_range(5.0..20.0)),
                };
                s.apply_override(&ov, &LearningConfig::default(), step).map(drop)
            }
            8 => {
                let asset = s.put_asset(format!("asset {}", rng.gen_range(0..20)).as_bytes()).unwrap();
                let items = (0..rng.gen_range(0..3))
                    .map(|_| ExerciseItem { kind: ItemKind::Audio, asset: asset.clone(), caption: "c".into() })
                    .collect();
                s.put_exercise(ExerciseManifest { id: String::new(), target_sound: "r".into(), items, difficulty: rng.gen_range(0..7) })
                    .map(drop)
            }
            _ => {
                let text = if rng.gen_bool(0.8) { tweaked_kb(&s, &mut rng) } else { "FUNCTION_BLOCK broken".into() };
                s.replace_kb(&text).map(drop)
            }
        };
        match result {
            Ok(()) => ok += 1,
            Err(_) => {
                // failed mutations leave the store untouched
                assert_eq!(s.snapshot(), before, "step {step}");
                rejected += 1;
            }
        }
        s.persist().unwrap();
        if step % 100 == 99 {
            assert!(s.audit().is_clean(), "step {step}: {:?}", s.audit());
        }
    }
    assert!(ok > 500 && rejected > 50, "ok {ok} rejected {rejected}");
    let audit = s.audit();
    assert!(audit.is_clean(), "{audit:?}");
    let back = Store::open_dir(dir.path()).unwrap();
    assert_eq!(observe(&back, &suggestions), observe(&s, &suggestions));
}
