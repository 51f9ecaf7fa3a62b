//! IMA-ADPCM and PCM16 audio handling for session recordings.
//!
//! All processing downstream of this module works on [`PcmBuffer`]: mono,
//! signed 16-bit samples with their sample rate. The recorder's 4-bit
//! IMA-ADPCM files are expanded to PCM16 on read.

mod adpcm;
mod wav;

pub use adpcm::{
    decode_block, decode_nibble, decode_stream, encode_block, encode_sample, encode_stream,
    initial_step_index, AdpcmBlock, AdpcmLayout, AdpcmState, INDEX_TABLE, MAX_STEP_INDEX,
    STEP_TABLE,
};
pub use wav::{wav_read, wav_write, WavFormat, FORMAT_IMA_ADPCM, FORMAT_PCM};

use thiserror::Error;

/// Sample rate of the session recorder.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("malformed ADPCM block: {0}")]
    MalformedBlock(String),
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported WAV format: {0}")]
    UnsupportedFormat(String),
    #[error("sample rate must be positive")]
    InvalidSampleRate,
}

/// Mono signed 16-bit audio.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PcmBuffer {
    samples: Vec<i16>,
    sample_rate: u32,
}

impl PcmBuffer {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self, CodecError> {
        if sample_rate == 0 {
            return Err(CodecError::InvalidSampleRate);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Silent buffer of `len` samples.
    pub fn silence(len: usize, sample_rate: u32) -> Result<Self, CodecError> {
        Self::new(vec![0; len], sample_rate)
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [i16] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<i16> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Number of samples covering `ms` milliseconds at this buffer's rate.
    pub fn ms_to_samples(&self, ms: f64) -> usize {
        ms_to_samples(ms, self.sample_rate)
    }

    /// Copy of the samples in `start..end`, clamped to the buffer.
    pub fn slice(&self, start: usize, end: usize) -> PcmBuffer {
        let end = end.min(self.samples.len());
        let start = start.min(end);
        PcmBuffer {
            samples: self.samples[start..end].to_vec(),
            sample_rate: self.sample_rate,
        }
    }

    /// Adds `other` into this buffer starting at `offset`, saturating at the
    /// 16-bit limits. Samples of `other` past the end are dropped.
    pub fn mix_at(&mut self, other: &[i16], offset: usize) {
        for (dst, &src) in self.samples.iter_mut().skip(offset).zip(other) {
            *dst = dst.saturating_add(src);
        }
    }
}

pub(crate) fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * f64::from(sample_rate) / 1000.0).round() as usize
}
