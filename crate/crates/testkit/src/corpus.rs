//! Synthetic therapy sessions with known ground truth.
//!
//! A session is a sequence of trials. In each trial the therapist speaks a
//! prompt (loud, low-pitched harmonic noise), the operator injects a START
//! marker, the child produces one to three bursts, and the operator closes
//! with an END marker. Everything sits on white background noise.

use std::f64::consts::PI;

use logoped_core::segmentation::{marker_len, synthesize_marker};
use logoped_core::{MarkerKind, PcmBuffer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Burst {
    pub start: usize,
    pub end: usize,
    pub snr_db: f64,
}

impl Burst {
    pub fn len_ms(&self) -> f64 {
        (self.end - self.start) as f64 * 1000.0 / f64::from(RATE)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSession {
    pub pcm: PcmBuffer,
    /// Offsets at which marker buffers (guards included) were mixed in.
    pub markers: Vec<(MarkerKind, usize)>,
    /// Child regions: end of START marker buffer .. END marker offset.
    pub regions: Vec<(usize, usize)>,
    pub bursts: Vec<Burst>,
    /// Therapist prompts, always outside regions.
    pub prompts: Vec<(usize, usize)>,
    pub noise_rms: f64,
}

#[derive(Debug, Clone)]
pub struct CorpusParams {
    pub noise_dbfs: (f64, f64),
    pub burst_snr_db: (f64, f64),
    pub burst_ms: (f64, f64),
    pub prompt_snr_db: (f64, f64),
    pub trials: (usize, usize),
    pub bursts_per_trial: (usize, usize),
}

impl Default for CorpusParams {
    fn default() -> Self {
        Self {
            noise_dbfs: (-50.0, -35.0),
            burst_snr_db: (10.0, 20.0),
            burst_ms: (100.0, 600.0),
            prompt_snr_db: (25.0, 35.0),
            trials: (1, 3),
            bursts_per_trial: (1, 3),
        }
    }
}

fn ms(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> usize {
    (rng.gen_range(lo..=hi) * f64::from(RATE) / 1000.0).round() as usize
}

/// Harmonic complex with `1/k` partial amplitudes, slight vibrato and
/// tremolo, 10 ms raised-cosine edges, scaled to mean power `power`.
pub fn voiced(rng: &mut ChaCha8Rng, len: usize, f0: f64, power: f64) -> Vec<f64> {
    let partials = ((4000.0 / f0) as usize).max(1);
    let phases: Vec<f64> = (0..partials).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let trem_hz = rng.gen_range(3.0..6.0);
    let ramp = (0.010 * f64::from(RATE)) as usize;
    let mut phase = 0.0;
    let mut x: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / f64::from(RATE);
            let f = f0 * (1.0 + 0.02 * (2.0 * PI * 5.0 * t).sin());
            phase += 2.0 * PI * f / f64::from(RATE);
            let s: f64 = (1..=partials)
                .map(|k| (k as f64 * phase + phases[k - 1]).sin() / k as f64)
                .sum();
            let env = 1.0 + 0.2 * (2.0 * PI * trem_hz * t).sin();
            let edge = if n < ramp {
                0.5 - 0.5 * (PI * n as f64 / ramp as f64).cos()
            } else if n >= len - ramp {
                0.5 - 0.5 * (PI * (len - 1 - n) as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            s * env * edge
        })
        .collect();
    let p = x.iter().map(|v| v * v).sum::<f64>() / len as f64;
    let g = (power / p).sqrt();
    x.iter_mut().for_each(|v| *v *= g);
    x
}

pub fn synth_session(seed: u64, params: &CorpusParams) -> SyntheticSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_rms = 32768.0 * 10f64.powf(rng.gen_range(params.noise_dbfs.0..=params.noise_dbfs.1) / 20.0);
    let noise_power = noise_rms * noise_rms;
    let mlen = marker_len(RATE);

    let mut signal: Vec<f64> = Vec::new();
    let mut markers = Vec::new();
    let mut regions = Vec::new();
    let mut bursts = Vec::new();
    let mut prompts = Vec::new();
    let pad = |signal: &mut Vec<f64>, n: usize| signal.extend(std::iter::repeat_n(0.0, n));
    let place_marker = |signal: &mut Vec<f64>, kind: MarkerKind| {
        let m = synthesize_marker(kind, RATE).unwrap();
        let at = signal.len();
        signal.extend(m.samples().iter().map(|&s| f64::from(s)));
        at
    };

    pad(&mut signal, ms(&mut rng, 200.0, 500.0));
    let trials = rng.gen_range(params.trials.0..=params.trials.1);
    for _ in 0..trials {
        let plen = ms(&mut rng, 400.0, 1200.0);
        let snr = rng.gen_range(params.prompt_snr_db.0..=params.prompt_snr_db.1);
        let f0 = rng.gen_range(100.0..200.0);
        let start = signal.len();
        signal.extend(voiced(&mut rng, plen, f0, noise_power * 10f64.powf(snr / 10.0)));
        prompts.push((start, signal.len()));
        pad(&mut signal, ms(&mut rng, 150.0, 400.0));

        let start_at = place_marker(&mut signal, MarkerKind::Start);
        markers.push((MarkerKind::Start, start_at));
        // noise-only lead-in longer than the floor seeding window
        pad(&mut signal, ms(&mut rng, 250.0, 500.0));
        let n = rng.gen_range(params.bursts_per_trial.0..=params.bursts_per_trial.1);
        for i in 0..n {
            if i > 0 {
                pad(&mut signal, ms(&mut rng, 450.0, 800.0));
            }
            let blen = ms(&mut rng, params.burst_ms.0, params.burst_ms.1);
            let snr = rng.gen_range(params.burst_snr_db.0..=params.burst_snr_db.1);
            let f0 = rng.gen_range(220.0..400.0);
            let start = signal.len();
            signal.extend(voiced(&mut rng, blen, f0, noise_power * 10f64.powf(snr / 10.0)));
            bursts.push(Burst {
                start,
                end: signal.len(),
                snr_db: snr,
            });
        }
        pad(&mut signal, ms(&mut rng, 300.0, 500.0));
        let end_at = place_marker(&mut signal, MarkerKind::End);
        markers.push((MarkerKind::End, end_at));
        regions.push((start_at + mlen, end_at));
        pad(&mut signal, ms(&mut rng, 100.0, 300.0));
    }
    pad(&mut signal, ms(&mut rng, 200.0, 400.0));

    let noise = Normal::new(0.0, noise_rms).unwrap();
    let samples: Vec<i16> = signal
        .iter()
        .map(|&s| (s + noise.sample(&mut rng)).round().clamp(-32768.0, 32767.0) as i16)
        .collect();
    SyntheticSession {
        pcm: PcmBuffer::new(samples, RATE).unwrap(),
        markers,
        regions,
        bursts,
        prompts,
        noise_rms,
    }
}

/// A session with one START/END pair around the given bursts, each given as
/// (offset from region start in ms, length in ms, SNR in dB). Used for
/// hand-checkable fixtures.
pub fn simple_session(seed: u64, noise_dbfs: f64, bursts_spec: &[(f64, f64, f64)], region_ms: f64) -> SyntheticSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise_rms = 32768.0 * 10f64.powf(noise_dbfs / 20.0);
    let at = |ms: f64| (ms * f64::from(RATE) / 1000.0).round() as usize;
    let lead = at(300.0);
    let mlen = marker_len(RATE);
    let region_start = lead + mlen;
    let region_end = region_start + at(region_ms);
    let total = region_end + mlen + lead;
    let mut signal = vec![0.0; total];
    for (kind, pos) in [(MarkerKind::Start, lead), (MarkerKind::End, region_end)] {
        let m = synthesize_marker(kind, RATE).unwrap();
        for (i, &s) in m.samples().iter().enumerate() {
            signal[pos + i] += f64::from(s);
        }
    }
    let mut bursts = Vec::new();
    for &(off, len, snr) in bursts_spec {
        let start = region_start + at(off);
        let b = voiced(&mut rng, at(len), 300.0, noise_rms * noise_rms * 10f64.powf(snr / 10.0));
        for (i, v) in b.iter().enumerate() {
            signal[start + i] += v;
        }
        bursts.push(Burst {
            start,
            end: start + b.len(),
            snr_db: snr,
        });
    }
    let noise = Normal::new(0.0, noise_rms.max(1e-9)).unwrap();
    let samples: Vec<i16> = signal
        .iter()
        .map(|&s| (s + noise.sample(&mut rng)).round().clamp(-32768.0, 32767.0) as i16)
        .collect();
    SyntheticSession {
        pcm: PcmBuffer::new(samples, RATE).unwrap(),
        markers: vec![(MarkerKind::Start, lead), (MarkerKind::End, region_end)],
        regions: vec![(region_start, region_end)],
        bursts,
        prompts: Vec::new(),
        noise_rms,
    }
}
