//! Marker detection and child-speech segmentation.
//!
//! The recording operator injects short tone bursts into the session: a
//! 1000 Hz burst before the child speaks and a 1500 Hz burst after. Audio
//! between a START and the following END marker belongs to the child;
//! everything else (the therapist's prompts) is discarded before the energy
//! detector cuts the region into atomic segments.

mod markers;
mod vad;

pub use markers::{
    detect_markers, goertzel_power, marker_len, synthesize_marker, END_TONE_HZ, GUARD_MS,
    START_TONE_HZ, TONE_MS,
};
pub use vad::{marker_regions, segment_stream, MarkerRegion};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentationError {
    #[error("marker synthesis needs at least 8000 Hz, got {0}")]
    UnsupportedRate(u32),
    #[error("END marker at sample {position} has no open START")]
    UnpairedEndMarker { position: usize },
    #[error("invalid segmenter config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MarkerKind {
    Start,
    End,
}

impl MarkerKind {
    pub fn tone_hz(self) -> f64 {
        match self {
            MarkerKind::Start => START_TONE_HZ,
            MarkerKind::End => END_TONE_HZ,
        }
    }
}

/// A detected marker. `position` is the sample offset at which the marker
/// (including its leading silence guard) was placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerEvent {
    pub kind: MarkerKind,
    pub position: usize,
    pub confidence: f64,
}

/// A child vocalization, as sample offsets `start..end` into the session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Energy detector settings. Durations are milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmenterConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub noise_ema_alpha: f64,
    pub onset_ratio: f64,
    pub offset_ratio: f64,
    pub onset_frames: usize,
    pub hangover_frames: usize,
    pub min_segment_ms: f64,
    pub merge_gap_ms: f64,
}

impl Default for SegmenterConfig {
    fn default() -> Self {
        Self {
            frame_ms: 20.0,
            hop_ms: 10.0,
            noise_ema_alpha: 0.05,
            onset_ratio: 4.0,
            offset_ratio: 2.0,
            onset_frames: 3,
            hangover_frames: 20,
            min_segment_ms: 100.0,
            merge_gap_ms: 150.0,
        }
    }
}

impl SegmenterConfig {
    pub fn validate(&self) -> Result<(), SegmentationError> {
        let positive = [
            ("frame_ms", self.frame_ms),
            ("hop_ms", self.hop_ms),
            ("noise_ema_alpha", self.noise_ema_alpha),
            ("min_segment_ms", self.min_segment_ms),
            ("merge_gap_ms", self.merge_gap_ms),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SegmentationError::InvalidConfig(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if self.noise_ema_alpha >= 1.0 {
            return Err(SegmentationError::InvalidConfig(
                "noise_ema_alpha must be below 1".into(),
            ));
        }
        if self.onset_frames == 0 || self.hangover_frames == 0 {
            return Err(SegmentationError::InvalidConfig(
                "onset_frames and hangover_frames must be positive".into(),
            ));
        }
        if !(self.offset_ratio >= 1.0 && self.onset_ratio > self.offset_ratio) {
            return Err(SegmentationError::InvalidConfig(format!(
                "need onset_ratio > offset_ratio >= 1, got {} and {}",
                self.onset_ratio, self.offset_ratio
            )));
        }
        Ok(())
    }
}
