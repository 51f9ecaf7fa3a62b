use serde::{Deserialize, Serialize};

use super::markers::marker_len;
use super::{MarkerEvent, MarkerKind, Segment, SegmentationError, SegmenterConfig};
use crate::codec::{ms_to_samples, PcmBuffer};

/// Span of child audio between a START marker and its END (or end of stream).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerRegion {
    pub start: usize,
    pub end: usize,
}

impl MarkerRegion {
    pub fn contains(&self, seg: &Segment) -> bool {
        self.start <= seg.start && seg.end <= self.end
    }
}

const NOISE_SEED_MS: f64 = 200.0;
/// Lowest noise floor, in squared LSBs, so digital silence never triggers.
const MIN_NOISE_FLOOR: f64 = 1.0;

/// Pairs markers into child regions.
///
/// A region opens after the START marker's tone and guard, and closes where
/// the END marker was placed. A START arriving while a region is open closes
/// the open region at its position; a trailing START runs to the end of the
/// stream; an END with no open START is an error.
pub fn marker_regions(
    markers: &[MarkerEvent],
    len: usize,
    sample_rate: u32,
) -> Result<Vec<MarkerRegion>, SegmentationError> {
    let skip = marker_len(sample_rate);
    let mut sorted = markers.to_vec();
    sorted.sort_by_key(|m| m.position);

    let mut regions = Vec::new();
    let mut open: Option<usize> = None;
    let close = |from: usize, to: usize, regions: &mut Vec<MarkerRegion>| {
        let start = (from + skip).min(len);
        let end = to.min(len);
        if start < end {
            regions.push(MarkerRegion { start, end });
        }
    };
    for m in &sorted {
        match (m.kind, open) {
            (MarkerKind::Start, Some(from)) => {
                close(from, m.position, &mut regions);
                open = Some(m.position);
            }
            (MarkerKind::Start, None) => open = Some(m.position),
            (MarkerKind::End, Some(from)) => {
                close(from, m.position, &mut regions);
                open = None;
            }
            (MarkerKind::End, None) => {
                return Err(SegmentationError::UnpairedEndMarker {
                    position: m.position,
                })
            }
        }
    }
    if let Some(from) = open {
        close(from, len, &mut regions);
    }
    Ok(regions)
}

/// Cuts the child's vocalizations out of the marked regions of `pcm`.
///
/// Audio outside START..END regions is never examined. Inside each region an
/// energy detector with hysteresis runs over overlapping frames: the noise
/// floor is seeded from the quietest frame of the region's first 200 ms and
/// then tracked by an exponential moving average over non-speech frames.
/// Speech starts after `onset_frames` consecutive frames above
/// `onset_ratio * floor` and ends after `hangover_frames` consecutive frames at
/// or below `offset_ratio * floor`. Segments separated by less than
/// `merge_gap_ms` are merged, then segments shorter than `min_segment_ms` are
/// dropped.
pub fn segment_stream(
    pcm: &PcmBuffer,
    markers: &[MarkerEvent],
    cfg: &SegmenterConfig,
) -> Result<Vec<Segment>, SegmentationError> {
    cfg.validate()?;
    let rate = pcm.sample_rate();
    let regions = marker_regions(markers, pcm.len(), rate)?;
    let merge_gap = ms_to_samples(cfg.merge_gap_ms, rate);
    let min_len = ms_to_samples(cfg.min_segment_ms, rate);

    let mut out = Vec::new();
    for region in regions {
        let raw = detect_region(pcm.samples(), region, cfg, rate);
        let mut merged: Vec<Segment> = Vec::with_capacity(raw.len());
        for seg in raw {
            match merged.last_mut() {
                Some(prev) if seg.start.saturating_sub(prev.end) < merge_gap => {
                    prev.end = prev.end.max(seg.end)
                }
                _ => merged.push(seg),
            }
        }
        out.extend(merged.into_iter().filter(|s| s.len() >= min_len));
    }
    Ok(out)
}

#[derive(Clone, Copy)]
enum VadState {
    Silence { pending: usize, first: usize },
    Speech { first: usize, last_active: usize, quiet: usize },
}

fn detect_region(samples: &[i16], region: MarkerRegion, cfg: &SegmenterConfig, rate: u32) -> Vec<Segment> {
    let frame_len = ms_to_samples(cfg.frame_ms, rate).max(1);
    let hop = ms_to_samples(cfg.hop_ms, rate).max(1);
    let audio = &samples[region.start..region.end];
    if audio.len() < frame_len {
        return Vec::new();
    }
    let energies: Vec<f64> = (0..=(audio.len() - frame_len) / hop)
        .map(|i| {
            let frame = &audio[i * hop..i * hop + frame_len];
            frame.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>() / frame_len as f64
        })
        .collect();

    let seed_frames = (ms_to_samples(NOISE_SEED_MS, rate) / hop).clamp(1, energies.len());
    let mut floor = energies[..seed_frames]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(MIN_NOISE_FLOOR);

    // Frame i spans [i*hop, i*hop + frame_len); a segment is reported from the
    // hop-wide slice centred on its first active frame to the one centred on
    // its last.
    let lead = (frame_len.saturating_sub(hop)) / 2;
    let to_segment = |first: usize, last: usize| Segment {
        start: region.start + first * hop + lead,
        end: (region.start + last * hop + lead + hop).min(region.end),
    };

    let mut segments = Vec::new();
    let mut state = VadState::Silence { pending: 0, first: 0 };
    for (i, &energy) in energies.iter().enumerate() {
        state = match state {
            VadState::Silence { pending, first } => {
                if energy > cfg.onset_ratio * floor {
                    let first = if pending == 0 { i } else { first };
                    if pending + 1 >= cfg.onset_frames {
                        VadState::Speech { first, last_active: i, quiet: 0 }
                    } else {
                        VadState::Silence { pending: pending + 1, first }
                    }
                } else {
                    floor = ((1.0 - cfg.noise_ema_alpha) * floor + cfg.noise_ema_alpha * energy)
                        .max(MIN_NOISE_FLOOR);
                    VadState::Silence { pending: 0, first: 0 }
                }
            }
            VadState::Speech { first, last_active, quiet } => {
                if energy > cfg.offset_ratio * floor {
                    VadState::Speech { first, last_active: i, quiet: 0 }
                } else if quiet + 1 >= cfg.hangover_frames {
                    segments.push(to_segment(first, last_active));
                    VadState::Silence { pending: 0, first: 0 }
                } else {
                    VadState::Speech { first, last_active, quiet: quiet + 1 }
                }
            }
        };
    }
    if let VadState::Speech { first, last_active, .. } = state {
        segments.push(to_segment(first, last_active));
    }
    segments
}
