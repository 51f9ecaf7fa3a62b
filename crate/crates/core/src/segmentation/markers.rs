use std::f64::consts::PI;

use super::{MarkerEvent, MarkerKind, SegmentationError};
use crate::codec::{ms_to_samples, PcmBuffer};

pub const START_TONE_HZ: f64 = 1000.0;
pub const END_TONE_HZ: f64 = 1500.0;
pub const TONE_MS: f64 = 100.0;
pub const GUARD_MS: f64 = 20.0;

const TONE_AMPLITUDE: f64 = 16384.0;
const DETECT_FRAME_MS: f64 = 10.0;
/// Bin power over mean per-bin frame power required for a tonal frame.
const TONE_RATIO: f64 = 10.0;
const MIN_RUN_MS: f64 = 60.0;

/// Total length in samples of a synthesized marker, guards included.
pub fn marker_len(sample_rate: u32) -> usize {
    2 * ms_to_samples(GUARD_MS, sample_rate) + ms_to_samples(TONE_MS, sample_rate)
}

/// 100 ms half-scale sine (1000 Hz for START, 1500 Hz for END) starting at
/// phase 0, framed by 20 ms of silence on both sides.
pub fn synthesize_marker(kind: MarkerKind, sample_rate: u32) -> Result<PcmBuffer, SegmentationError> {
    if sample_rate < 8000 {
        return Err(SegmentationError::UnsupportedRate(sample_rate));
    }
    let guard = ms_to_samples(GUARD_MS, sample_rate);
    let tone = ms_to_samples(TONE_MS, sample_rate);
    let w = 2.0 * PI * kind.tone_hz() / f64::from(sample_rate);
    let mut samples = vec![0i16; 2 * guard + tone];
    for (n, s) in samples[guard..guard + tone].iter_mut().enumerate() {
        *s = (TONE_AMPLITUDE * (w * n as f64).sin()).round() as i16;
    }
    Ok(PcmBuffer::new(samples, sample_rate).expect("rate checked above"))
}

/// Squared DFT magnitude of `frame` at `freq_hz` (Goertzel recurrence).
pub fn goertzel_power(frame: &[i16], freq_hz: f64, sample_rate: u32) -> f64 {
    let coeff = 2.0 * (2.0 * PI * freq_hz / f64::from(sample_rate)).cos();
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &x in frame {
        let s = f64::from(x) + coeff * s1 - s2;
        s2 = s1;
        s1 = s;
    }
    (s1 * s1 + s2 * s2 - coeff * s1 * s2).max(0.0)
}

#[derive(Clone, Copy)]
struct FrameTone {
    ratio: f64,
    power: f64,
}

struct Run {
    first_frame: usize,
    frames: Vec<FrameTone>,
}

/// Finds START/END tone markers.
///
/// The signal is cut into 10 ms frames. A frame is tonal for a marker when
/// the Goertzel power at the marker frequency exceeds ten times the frame's
/// mean per-bin power (its energy, by Parseval); six consecutive tonal frames
/// declare a marker. The onset inside the first frame of the run is estimated
/// from its tone amplitude relative to the rest of the run, and the reported
/// position is moved back by the leading guard so it matches the offset at
/// which [`synthesize_marker`] output was placed.
pub fn detect_markers(pcm: &PcmBuffer) -> Vec<MarkerEvent> {
    let rate = pcm.sample_rate();
    let frame_len = ms_to_samples(DETECT_FRAME_MS, rate).max(1);
    let min_run = (MIN_RUN_MS / DETECT_FRAME_MS).round() as usize;
    let guard = ms_to_samples(GUARD_MS, rate);
    let half_bins = frame_len as f64 / 2.0;

    let mut events = Vec::new();
    for kind in [MarkerKind::Start, MarkerKind::End] {
        let freq = kind.tone_hz();
        if freq >= f64::from(rate) / 2.0 {
            continue;
        }
        let mut run: Option<Run> = None;
        for (idx, frame) in pcm.samples().chunks_exact(frame_len).enumerate() {
            let energy: f64 = frame.iter().map(|&x| f64::from(x) * f64::from(x)).sum();
            let power = goertzel_power(frame, freq, rate);
            let ratio = if energy > 0.0 { power / energy } else { 0.0 };
            if ratio > TONE_RATIO {
                let tone = FrameTone { ratio, power };
                match run.as_mut() {
                    Some(r) => r.frames.push(tone),
                    None => {
                        run = Some(Run {
                            first_frame: idx,
                            frames: vec![tone],
                        })
                    }
                }
            } else if let Some(r) = run.take() {
                if r.frames.len() >= min_run {
                    events.push(finish_run(kind, &r, frame_len, guard, half_bins));
                }
            }
        }
        if let Some(r) = run.take() {
            if r.frames.len() >= min_run {
                events.push(finish_run(kind, &r, frame_len, guard, half_bins));
            }
        }
    }
    events.sort_by_key(|e| e.position);
    events.dedup_by_key(|e| e.position);
    events
}

fn finish_run(kind: MarkerKind, run: &Run, frame_len: usize, guard: usize, half_bins: f64) -> MarkerEvent {
    let first = run.frames[0];
    // full frames of the run, excluding the partial first and last ones
    let inner = &run.frames[1..run.frames.len() - 1];
    let full_amp = inner.iter().map(|f| f.power.sqrt()).sum::<f64>() / inner.len().max(1) as f64;
    let covered = if full_amp > 0.0 {
        (first.power.sqrt() / full_amp).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let onset = run.first_frame * frame_len + ((1.0 - covered) * frame_len as f64).round() as usize;
    let mean_ratio = run.frames.iter().map(|f| f.ratio).sum::<f64>() / run.frames.len() as f64;
    MarkerEvent {
        kind,
        position: onset.saturating_sub(guard),
        confidence: (mean_ratio / half_bins).clamp(0.0, 1.0),
    }
}
