//! Therapy suggestions on top of the fuzzy knowledge base, and weight
//! adaptation from therapist corrections.
//!
//! Scores use the evaluation scale 0..=3 where 3 is a correct pronunciation.
//! The knowledge base reads two inputs, `severity` (0..3) and `progress`
//! (-1..1), and produces `difficulty` and `dosage`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fcl::{parse_fcl, FuzzySystem, InferenceError, InferenceTrace};

/// Source of the shipped knowledge base.
pub const DEFAULT_KB: &str = include_str!("../../kb/default.fcl");

pub const SEVERITY: &str = "severity";
pub const PROGRESS: &str = "progress";
pub const DIFFICULTY: &str = "difficulty";
pub const DOSAGE: &str = "dosage";

pub const MAX_SCORE: u8 = 3;

pub fn default_kb() -> FuzzySystem {
    parse_fcl(DEFAULT_KB).expect("shipped knowledge base parses")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TherapyError {
    #[error("no scores given")]
    EmptyScores,
    #[error("score {0} outside 0..=3")]
    ScoreOutOfRange(u8),
    #[error("{name} = {value} is outside its range")]
    InputOutOfRange { name: &'static str, value: f64 },
    #[error("knowledge base lacks {0}")]
    KbMismatch(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("suggestion was produced by a knowledge base with different rules")]
    StaleSuggestion,
    #[error("invalid override: {0}")]
    InvalidOverride(String),
    #[error("invalid learning config: {0}")]
    InvalidLearningConfig(String),
}

fn check_scores(scores: &[u8]) -> Result<(), TherapyError> {
    match scores.iter().find(|&&s| s > MAX_SCORE) {
        Some(&s) => Err(TherapyError::ScoreOutOfRange(s)),
        None => Ok(()),
    }
}

fn mean(scores: &[u8]) -> f64 {
    scores.iter().map(|&s| u32::from(s)).sum::<u32>() as f64 / scores.len() as f64
}

/// `3 - mean(scores)`: 0 for perfect pronunciation, 3 for maximal impairment.
pub fn severity_from_scores(scores: &[u8]) -> Result<f64, TherapyError> {
    if scores.is_empty() {
        return Err(TherapyError::EmptyScores);
    }
    check_scores(scores)?;
    Ok(f64::from(MAX_SCORE) - mean(scores))
}

/// Change in mean score between two sessions, scaled to [-1, 1]. With no
/// previous scores the progress is 0.
pub fn progress_between(prev: Option<&[u8]>, cur: &[u8]) -> Result<f64, TherapyError> {
    if cur.is_empty() {
        return Err(TherapyError::EmptyScores);
    }
    check_scores(cur)?;
    match prev {
        Some(prev) if !prev.is_empty() => {
            check_scores(prev)?;
            Ok((mean(cur) - mean(prev)) / f64::from(MAX_SCORE))
        }
        _ => Ok(0.0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TherapySuggestion {
    /// Assigned when the suggestion is stored; empty before.
    pub id: String,
    pub child_id: String,
    pub severity: f64,
    pub progress: f64,
    pub difficulty: f64,
    pub dosage: f64,
    pub trace: InferenceTrace,
    /// [`FuzzySystem::structure_fingerprint`] of the knowledge base used.
    pub kb_fingerprint: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: i64,
}

/// Runs the knowledge base for one child.
pub fn suggest(
    kb: &FuzzySystem,
    child_id: &str,
    severity: f64,
    progress: f64,
    timestamp: i64,
) -> Result<TherapySuggestion, TherapyError> {
    if !(0.0..=3.0).contains(&severity) {
        return Err(TherapyError::InputOutOfRange {
            name: SEVERITY,
            value: severity,
        });
    }
    if !(-1.0..=1.0).contains(&progress) {
        return Err(TherapyError::InputOutOfRange {
            name: PROGRESS,
            value: progress,
        });
    }
    for name in [SEVERITY, PROGRESS] {
        if kb.input(name).is_none() {
            return Err(TherapyError::KbMismatch(format!("input `{name}`")));
        }
    }
    for name in [DIFFICULTY, DOSAGE] {
        if kb.output(name).is_none() {
            return Err(TherapyError::KbMismatch(format!("output `{name}`")));
        }
    }
    let inputs = BTreeMap::from([
        (SEVERITY.to_string(), severity),
        (PROGRESS.to_string(), progress),
    ]);
    let (outputs, trace) = kb.infer(&inputs)?;
    Ok(TherapySuggestion {
        id: String::new(),
        child_id: child_id.to_string(),
        severity,
        progress,
        difficulty: outputs[DIFFICULTY],
        dosage: outputs[DOSAGE],
        trace,
        kb_fingerprint: kb.structure_fingerprint(),
        timestamp,
    })
}

/// A therapist's correction of a stored suggestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub suggestion_id: String,
    #[serde(default)]
    pub difficulty: Option<f64>,
    #[serde(default)]
    pub dosage: Option<f64>,
}

impl Override {
    fn corrections(&self) -> Vec<(&'static str, f64)> {
        [(DIFFICULTY, self.difficulty), (DOSAGE, self.dosage)]
            .into_iter()
            .filter_map(|(n, v)| v.map(|v| (n, v)))
            .collect()
    }

    pub fn validate(&self, kb: &FuzzySystem) -> Result<(), TherapyError> {
        let corrections = self.corrections();
        if corrections.is_empty() {
            return Err(TherapyError::InvalidOverride(
                "give a therapist difficulty and/or dosage".into(),
            ));
        }
        for (name, value) in corrections {
            let var = kb
                .output(name)
                .ok_or_else(|| TherapyError::KbMismatch(format!("output `{name}`")))?;
            let (lo, hi) = var.effective_range();
            if !(value.is_finite() && (lo..=hi).contains(&value)) {
                return Err(TherapyError::InvalidOverride(format!(
                    "{name} = {value} outside {lo}..{hi}"
                )));
            }
        }
        Ok(())
    }
}

/// How a fired rule is judged against a therapist's correction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CreditRule {
    /// Reward rules whose consequent centroid lies on the therapist's side of
    /// the system's value, penalize those on the other side.
    #[default]
    Direction,
    /// Reward rules whose consequent centroid is closer to the therapist's
    /// value than to the system's, penalize the converse. Can push the output
    /// away from the therapist when a centroid sits between the system value
    /// and the midpoint.
    Proximity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningConfig {
    /// Weight step per unit of firing degree.
    pub eta: f64,
    /// Corrections within `tau` times the output range are ignored.
    pub tau: f64,
    pub credit: CreditRule,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            tau: 0.10,
            credit: CreditRule::Direction,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<(), TherapyError> {
        for (name, v) in [("eta", self.eta), ("tau", self.tau)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(TherapyError::InvalidLearningConfig(format!(
                    "{name} = {v} outside (0, 1)"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightChange {
    pub rule_id: u32,
    pub before: f64,
    pub after: f64,
}

/// Nudges rule weights toward a therapist's correction.
///
/// For each corrected output whose correction exceeds `tau` of its range,
/// every rule that fired on that output (antecedent degree > 0) moves by
/// `eta * degree`, up or down as judged by `cfg.credit`. A rule whose
/// centroid ties (equal distances, or sitting exactly on the system value
/// under [`CreditRule::Direction`]) is left alone.
/// Weights are clamped to [0, 1]. Only weights change.
pub fn apply_override(
    kb: &FuzzySystem,
    suggestion: &TherapySuggestion,
    correction: &Override,
    cfg: &LearningConfig,
) -> Result<(FuzzySystem, Vec<WeightChange>), TherapyError> {
    cfg.validate()?;
    if suggestion.kb_fingerprint != kb.structure_fingerprint()
        || suggestion.trace.rules.len() != kb.rule_count()
        || suggestion.trace.rules.iter().any(|r| kb.rule(r.rule_id).is_none())
    {
        return Err(TherapyError::StaleSuggestion);
    }
    correction.validate(kb)?;

    let mut deltas: BTreeMap<u32, f64> = BTreeMap::new();
    for (output, target) in correction.corrections() {
        let var = kb.output(output).expect("validated above");
        let (lo, hi) = var.effective_range();
        let system_value = suggestion
            .trace
            .outputs
            .get(output)
            .map(|o| o.value)
            .ok_or(TherapyError::StaleSuggestion)?;
        if (target - system_value).abs() <= cfg.tau * (hi - lo) {
            continue;
        }
        for act in suggestion.trace.rules.iter().filter(|a| a.firing > 0.0) {
            let rule = kb.rule(act.rule_id).expect("checked above");
            for c in rule.consequents.iter().filter(|c| c.variable == output) {
                let centroid = kb
                    .term_centroid(output, &c.term)
                    .expect("parsed rules reference existing terms");
                let score = match cfg.credit {
                    CreditRule::Direction => (centroid - system_value) * (target - system_value),
                    CreditRule::Proximity => {
                        (centroid - system_value).abs() - (centroid - target).abs()
                    }
                };
                let step = cfg.eta * act.firing;
                if score > 0.0 {
                    *deltas.entry(rule.id).or_default() += step;
                } else if score < 0.0 {
                    *deltas.entry(rule.id).or_default() -= step;
                }
            }
        }
    }

    let mut updated = kb.clone();
    let mut changes = Vec::new();
    for (id, delta) in deltas {
        let rule = updated.rule_mut(id).expect("rule exists");
        let before = rule.weight;
        rule.weight = (before + delta).clamp(0.0, 1.0);
        if rule.weight != before {
            changes.push(WeightChange {
                rule_id: id,
                before,
                after: rule.weight,
            });
        }
    }
    Ok((updated, changes))
}
