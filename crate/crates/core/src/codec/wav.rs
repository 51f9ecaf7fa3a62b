//! RIFF/WAVE container for mono PCM16 and IMA-ADPCM audio.

use super::adpcm::{decode_stream, encode_stream, AdpcmLayout};
use super::{CodecError, PcmBuffer};

pub const FORMAT_PCM: u16 = 0x0001;
pub const FORMAT_IMA_ADPCM: u16 = 0x0011;

/// Encoding used by [`wav_write`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    #[default]
    Pcm16,
    ImaAdpcm(AdpcmLayout),
}

struct FmtChunk {
    format_tag: u16,
    channels: u16,
    sample_rate: u32,
    block_align: u16,
    bits_per_sample: u16,
    samples_per_block: Option<u16>,
}

fn malformed(msg: impl Into<String>) -> CodecError {
    CodecError::MalformedWav(msg.into())
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn parse_fmt(body: &[u8]) -> Result<FmtChunk, CodecError> {
    if body.len() < 16 {
        return Err(malformed(format!("fmt chunk of {} bytes", body.len())));
    }
    let samples_per_block = if body.len() >= 20 && u16_at(body, 16) >= 2 {
        Some(u16_at(body, 18))
    } else {
        None
    };
    Ok(FmtChunk {
        format_tag: u16_at(body, 0),
        channels: u16_at(body, 2),
        sample_rate: u32_at(body, 4),
        block_align: u16_at(body, 12),
        bits_per_sample: u16_at(body, 14),
        samples_per_block,
    })
}

/// Reads a mono PCM16 or IMA-ADPCM WAV file. ADPCM data is decoded block by
/// block; the result carries the file's sample rate.
pub fn wav_read(bytes: &[u8]) -> Result<PcmBuffer, CodecError> {
    if bytes.len() < 12 {
        return Err(malformed(format!("{} bytes is too short for RIFF", bytes.len())));
    }
    if &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(malformed("missing RIFF/WAVE magic"));
    }

    let mut fmt = None;
    let mut fact = None;
    let mut data = None;
    let mut pos = 12;
    while pos < bytes.len() {
        if bytes.len() - pos < 8 {
            return Err(malformed("truncated chunk header"));
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                malformed(format!(
                    "chunk {:?} claims {size} bytes past end of file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(parse_fmt(body)?),
            b"fact" if body.len() >= 4 => fact = Some(u32_at(body, 0) as usize),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| malformed("no fmt chunk"))?;
    let data = data.ok_or_else(|| malformed("no data chunk"))?;
    if fmt.sample_rate == 0 {
        return Err(malformed("zero sample rate"));
    }
    if fmt.channels != 1 {
        return Err(CodecError::UnsupportedFormat(format!(
            "{} channels; only mono is accepted",
            fmt.channels
        )));
    }

    let samples = match fmt.format_tag {
        FORMAT_PCM => {
            if fmt.bits_per_sample != 16 {
                return Err(CodecError::UnsupportedFormat(format!(
                    "{}-bit PCM",
                    fmt.bits_per_sample
                )));
            }
            if data.len() % 2 != 0 {
                return Err(malformed("PCM16 data ends mid-sample"));
            }
            data.chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]))
                .collect()
        }
        FORMAT_IMA_ADPCM => {
            if fmt.bits_per_sample != 4 {
                return Err(CodecError::UnsupportedFormat(format!(
                    "{}-bit IMA-ADPCM",
                    fmt.bits_per_sample
                )));
            }
            let layout = AdpcmLayout::new(fmt.block_align)?;
            if let Some(spb) = fmt.samples_per_block {
                if usize::from(spb) != layout.samples_per_block() {
                    return Err(malformed(format!(
                        "samples per block {spb} disagrees with block_align {}",
                        fmt.block_align
                    )));
                }
            }
            decode_stream(data, layout, fact).map_err(|e| match e {
                CodecError::MalformedBlock(msg) => malformed(msg),
                other => other,
            })?
        }
        tag => {
            return Err(CodecError::UnsupportedFormat(format!(
                "format tag {tag:#06x}"
            )))
        }
    };
    PcmBuffer::new(samples, fmt.sample_rate)
}

fn push_chunk(out: &mut Vec<u8>, id: &[u8; 4], body: &[u8]) {
    out.extend_from_slice(id);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(body);
    if body.len() % 2 == 1 {
        out.push(0);
    }
}

/// Writes `pcm` as a mono WAV file. An empty buffer yields a valid file with
/// a zero-length data chunk.
pub fn wav_write(pcm: &PcmBuffer, format: WavFormat) -> Vec<u8> {
    let rate = pcm.sample_rate();
    let mut fmt = Vec::with_capacity(20);
    let mut chunks = Vec::new();
    match format {
        WavFormat::Pcm16 => {
            fmt.extend_from_slice(&FORMAT_PCM.to_le_bytes());
            fmt.extend_from_slice(&1u16.to_le_bytes());
            fmt.extend_from_slice(&rate.to_le_bytes());
            fmt.extend_from_slice(&(rate * 2).to_le_bytes());
            fmt.extend_from_slice(&2u16.to_le_bytes());
            fmt.extend_from_slice(&16u16.to_le_bytes());
            push_chunk(&mut chunks, b"fmt ", &fmt);
            let data: Vec<u8> = pcm.samples().iter().flat_map(|s| s.to_le_bytes()).collect();
            push_chunk(&mut chunks, b"data", &data);
        }
        WavFormat::ImaAdpcm(layout) => {
            let spb = layout.samples_per_block();
            let byte_rate = (u64::from(rate) * u64::from(layout.block_align()) / spb as u64) as u32;
            fmt.extend_from_slice(&FORMAT_IMA_ADPCM.to_le_bytes());
            fmt.extend_from_slice(&1u16.to_le_bytes());
            fmt.extend_from_slice(&rate.to_le_bytes());
            fmt.extend_from_slice(&byte_rate.to_le_bytes());
            fmt.extend_from_slice(&layout.block_align().to_le_bytes());
            fmt.extend_from_slice(&4u16.to_le_bytes());
            fmt.extend_from_slice(&2u16.to_le_bytes());
            fmt.extend_from_slice(&(spb as u16).to_le_bytes());
            push_chunk(&mut chunks, b"fmt ", &fmt);
            push_chunk(&mut chunks, b"fact", &(pcm.len() as u32).to_le_bytes());
            push_chunk(&mut chunks, b"data", &encode_stream(pcm.samples(), layout));
        }
    }
    let mut out = Vec::with_capacity(12 + chunks.len());
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((4 + chunks.len()) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(&chunks);
    out
}
