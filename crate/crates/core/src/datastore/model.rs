use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::segmentation::MarkerEvent;
use crate::therapy::WeightChange;

macro_rules! closed_enum {
    ($name:ident, $field:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = StoreError;

            fn from_str(s: &str) -> Result<Self, StoreError> {
                let s = s.trim();
                $(if s.eq_ignore_ascii_case($text) {
                    return Ok($name::$variant);
                })+
                Err(StoreError::InvalidEnum {
                    field: $field,
                    value: s.to_string(),
                })
            }
        }
    };
}

closed_enum!(Disorder, "disorder", {
    Sigmatism => "SIGMATISM",
    Rotacism => "ROTACISM",
    PolymorphDyslalia => "POLYMORPH_DYSLALIA",
});

closed_enum!(TherapyGroup, "therapy_group", {
    Classical => "CLASSICAL",
    Assisted => "ASSISTED",
});

closed_enum!(Phase, "phase", {
    PreTest => "PRE_TEST",
    Therapy => "THERAPY",
    PostTest => "POST_TEST",
});

closed_enum!(ItemKind, "kind", {
    Audio => "AUDIO",
    Image => "IMAGE",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildRecord {
    pub id: String,
    pub name: String,
    pub age_months: u16,
    pub disorder: Disorder,
    pub therapy_group: TherapyGroup,
}

/// Child record as submitted by a client; enums are still free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildDraft {
    /// Omitted for a new child; the store assigns one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub name: String,
    pub age_months: u16,
    pub disorder: String,
    pub therapy_group: String,
}

impl ChildDraft {
    pub fn new(name: &str, age_months: u16, disorder: Disorder, group: TherapyGroup) -> Self {
        Self {
            id: None,
            name: name.to_string(),
            age_months,
            disorder: disorder.to_string(),
            therapy_group: group.to_string(),
        }
    }

    pub fn with_id(mut self, id: &str) -> Self {
        self.id = Some(id.to_string());
        self
    }
}

impl From<&ChildRecord> for ChildDraft {
    fn from(r: &ChildRecord) -> Self {
        Self {
            id: Some(r.id.clone()),
            name: r.name.clone(),
            age_months: r.age_months,
            disorder: r.disorder.to_string(),
            therapy_group: r.therapy_group.to_string(),
        }
    }
}

/// Ids are used in URLs and file names.
pub(crate) fn check_id(what: &str, id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidRecord(format!(
            "{what} id `{id}` must be 1-64 characters of [A-Za-z0-9_-]"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionFlag {
    /// No START..END region was found, so nothing was segmented.
    NoMarkerPairs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub id: String,
    /// Sample offsets into the session audio, end exclusive.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub child_id: String,
    pub phase: Phase,
    /// Relative path of the original upload inside the store directory.
    pub audio: String,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub markers: Vec<MarkerEvent>,
    pub segments: Vec<SegmentRecord>,
    pub flags: Vec<SessionFlag>,
    /// Milliseconds since the Unix epoch.
    pub created_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub segment_id: String,
    pub expected_sound: String,
    pub probe: String,
    pub score: u8,
}

/// A segment together with its evaluation, as shown to the reviewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentView {
    pub id: String,
    pub session_id: String,
    pub start: usize,
    pub end: usize,
    pub start_ms: f64,
    pub end_ms: f64,
    pub evaluation: Option<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRecord {
    pub id: String,
    pub suggestion_id: String,
    pub difficulty: Option<f64>,
    pub dosage: Option<f64>,
    pub changes: Vec<WeightChange>,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseItem {
    pub kind: ItemKind,
    /// SHA-256 of an uploaded asset.
    pub asset: String,
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseManifest {
    /// Empty on creation; the store assigns one.
    #[serde(default)]
    pub id: String,
    pub target_sound: String,
    pub items: Vec<ExerciseItem>,
    pub difficulty: u8,
}

/// A manifest with its assets inlined (base64), ready to copy to a device.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExerciseBundle {
    pub manifest: ExerciseManifest,
    pub assets: std::collections::BTreeMap<String, String>,
}
