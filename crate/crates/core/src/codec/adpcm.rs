//! IMA/DVI ADPCM, WAV format tag 0x0011 block layout.
//!
//! A mono block is a 4-byte header (seed sample as little-endian `i16`, step
//! index, one reserved byte) followed by packed 4-bit codes, low nibble first.
//! The seed sample is emitted verbatim, so a block of `n` payload bytes decodes
//! to `2n + 1` samples.

use super::CodecError;

pub const MAX_STEP_INDEX: u8 = 88;

pub const INDEX_TABLE: [i8; 16] = [-1, -1, -1, -1, 2, 4, 6, 8, -1, -1, -1, -1, 2, 4, 6, 8];

pub const STEP_TABLE: [i16; 89] = [
    7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37, 41, 45, 50, 55, 60, 66,
    73, 80, 88, 97, 107, 118, 130, 143, 157, 173, 190, 209, 230, 253, 279, 307, 337, 371, 408,
    449, 494, 544, 598, 658, 724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
    2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894, 6484, 7132, 7845, 8630,
    9493, 10442, 11487, 12635, 13899, 15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794,
    32767,
];

/// Predictor state shared by the encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AdpcmState {
    pub predictor: i16,
    pub step_index: u8,
}

impl AdpcmState {
    pub fn new(predictor: i16, step_index: u8) -> Self {
        Self {
            predictor,
            step_index: step_index.min(MAX_STEP_INDEX),
        }
    }

    /// Quantizer step currently in effect.
    pub fn step_size(&self) -> i32 {
        i32::from(STEP_TABLE[usize::from(self.step_index.min(MAX_STEP_INDEX))])
    }
}

/// Decodes one 4-bit code and advances `state`. Returns the new sample.
pub fn decode_nibble(nibble: u8, state: &mut AdpcmState) -> i16 {
    let nibble = nibble & 0x0f;
    let step = state.step_size();
    let mut diff = step >> 3;
    if nibble & 4 != 0 {
        diff += step;
    }
    if nibble & 2 != 0 {
        diff += step >> 1;
    }
    if nibble & 1 != 0 {
        diff += step >> 2;
    }
    let predictor = if nibble & 8 != 0 {
        i32::from(state.predictor) - diff
    } else {
        i32::from(state.predictor) + diff
    };
    state.predictor = predictor.clamp(i32::from(i16::MIN), i32::from(i16::MAX)) as i16;
    state.step_index = (i16::from(state.step_index.min(MAX_STEP_INDEX))
        + i16::from(INDEX_TABLE[usize::from(nibble)]))
    .clamp(0, i16::from(MAX_STEP_INDEX)) as u8;
    state.predictor
}

/// Quantizes `sample` against `state` and advances `state` exactly as a
/// decoder reading the returned code would.
pub fn encode_sample(sample: i16, state: &mut AdpcmState) -> u8 {
    let mut step = state.step_size();
    let mut diff = i32::from(sample) - i32::from(state.predictor);
    let mut code = 0u8;
    if diff < 0 {
        code = 8;
        diff = -diff;
    }
    if diff >= step {
        code |= 4;
        diff -= step;
    }
    step >>= 1;
    if diff >= step {
        code |= 2;
        diff -= step;
    }
    step >>= 1;
    if diff >= step {
        code |= 1;
    }
    decode_nibble(code, state);
    code
}

/// Smallest step index whose quantizer can reach the first sample-to-sample
/// difference of `fragment` in a single code.
pub fn initial_step_index(fragment: &[i16]) -> u8 {
    let first_diff = match fragment {
        [a, b, ..] => (i32::from(*b) - i32::from(*a)).abs(),
        _ => return 0,
    };
    STEP_TABLE
        .iter()
        .position(|&s| 2 * i32::from(s) >= first_diff)
        .unwrap_or(usize::from(MAX_STEP_INDEX)) as u8
}

/// One mono IMA-ADPCM block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdpcmBlock {
    pub predictor: i16,
    pub step_index: u8,
    pub payload: Vec<u8>,
}

impl AdpcmBlock {
    pub const HEADER_LEN: usize = 4;

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < Self::HEADER_LEN {
            return Err(CodecError::MalformedBlock(format!(
                "block of {} bytes is shorter than its header",
                bytes.len()
            )));
        }
        let block = Self {
            predictor: i16::from_le_bytes([bytes[0], bytes[1]]),
            step_index: bytes[2],
            payload: bytes[Self::HEADER_LEN..].to_vec(),
        };
        block.check_header()?;
        Ok(block)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::HEADER_LEN + self.payload.len());
        out.extend_from_slice(&self.predictor.to_le_bytes());
        out.push(self.step_index);
        out.push(0);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Samples produced by decoding this block (seed plus two per byte).
    pub fn sample_count(&self) -> usize {
        1 + 2 * self.payload.len()
    }

    fn check_header(&self) -> Result<(), CodecError> {
        if self.step_index > MAX_STEP_INDEX {
            return Err(CodecError::MalformedBlock(format!(
                "step index {} exceeds {MAX_STEP_INDEX}",
                self.step_index
            )));
        }
        Ok(())
    }
}

/// Decodes a block into its samples and the decoder state after the last code.
pub fn decode_block(block: &AdpcmBlock) -> Result<(Vec<i16>, AdpcmState), CodecError> {
    block.check_header()?;
    let mut state = AdpcmState::new(block.predictor, block.step_index);
    let mut samples = Vec::with_capacity(block.sample_count());
    samples.push(block.predictor);
    for &byte in &block.payload {
        samples.push(decode_nibble(byte & 0x0f, &mut state));
        samples.push(decode_nibble(byte >> 4, &mut state));
    }
    Ok((samples, state))
}

/// Encodes a fragment into one block.
///
/// The first sample becomes the block's seed; `state.step_index` seeds the
/// quantizer (its predictor is replaced by the seed sample). An even-length
/// fragment leaves a trailing zero pad nibble, which decodes to one extra
/// sample that callers trim using the known sample count.
///
/// # Panics
///
/// Panics if `fragment` is empty.
pub fn encode_block(fragment: &[i16], state: AdpcmState) -> (AdpcmBlock, AdpcmState) {
    let (&seed, rest) = fragment.split_first().expect("fragment must not be empty");
    let step_index = state.step_index.min(MAX_STEP_INDEX);
    let mut state = AdpcmState::new(seed, step_index);
    let mut payload = Vec::with_capacity(rest.len().div_ceil(2));
    for pair in rest.chunks(2) {
        let lo = encode_sample(pair[0], &mut state);
        let hi = match pair.get(1) {
            Some(&s) => encode_sample(s, &mut state),
            None => 0,
        };
        payload.push(lo | (hi << 4));
    }
    (
        AdpcmBlock {
            predictor: seed,
            step_index,
            payload,
        },
        state,
    )
}

/// Block geometry of an IMA-ADPCM data chunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdpcmLayout {
    block_align: u16,
}

impl AdpcmLayout {
    /// `block_align` must leave room for the header and at least one code byte.
    pub fn new(block_align: u16) -> Result<Self, CodecError> {
        if usize::from(block_align) <= AdpcmBlock::HEADER_LEN {
            return Err(CodecError::UnsupportedFormat(format!(
                "IMA-ADPCM block_align {block_align} too small"
            )));
        }
        Ok(Self { block_align })
    }

    pub fn block_align(&self) -> u16 {
        self.block_align
    }

    pub fn samples_per_block(&self) -> usize {
        1 + 2 * (usize::from(self.block_align) - AdpcmBlock::HEADER_LEN)
    }
}

impl Default for AdpcmLayout {
    /// 256-byte blocks carrying 505 samples.
    fn default() -> Self {
        Self { block_align: 256 }
    }
}

/// Encodes a whole signal as consecutive blocks.
///
/// Each block's quantizer starts from the step index the previous block ended
/// with; the first block uses [`initial_step_index`]. The final block is not
/// padded to `block_align`.
pub fn encode_stream(samples: &[i16], layout: AdpcmLayout) -> Vec<u8> {
    let per_block = layout.samples_per_block();
    let mut out = Vec::with_capacity(samples.len() / 2 + AdpcmBlock::HEADER_LEN);
    let mut state = AdpcmState::new(0, initial_step_index(samples));
    for fragment in samples.chunks(per_block) {
        let (block, next) = encode_block(fragment, state);
        out.extend_from_slice(&block.to_bytes());
        state = next;
    }
    out
}

/// Decodes consecutive blocks. `total_samples`, when known (WAV `fact`
/// chunk), trims the padding of the final block and must not exceed what the
/// data holds.
pub fn decode_stream(
    data: &[u8],
    layout: AdpcmLayout,
    total_samples: Option<usize>,
) -> Result<Vec<i16>, CodecError> {
    let mut out = Vec::with_capacity(data.len() * 2);
    for chunk in data.chunks(usize::from(layout.block_align)) {
        let block = AdpcmBlock::from_bytes(chunk)?;
        let (samples, _) = decode_block(&block)?;
        out.extend_from_slice(&samples);
    }
    if let Some(total) = total_samples {
        if total > out.len() {
            return Err(CodecError::MalformedBlock(format!(
                "payload truncated: {} samples declared, {} present",
                total,
                out.len()
            )));
        }
        out.truncate(total);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_nibbles_hold_at_floor() {
        let block = AdpcmBlock {
            predictor: 0,
            step_index: 0,
            payload: vec![0x00, 0x00],
        };
        let (samples, state) = decode_block(&block).unwrap();
        assert_eq!(samples, vec![0, 0, 0, 0, 0]);
        assert_eq!(state, AdpcmState::new(0, 0));
    }

    #[test]
    fn nibble_seven_from_rest() {
        let mut state = AdpcmState::default();
        assert_eq!(decode_nibble(7, &mut state), 11);
        assert_eq!(state.step_index, 8);
    }

    #[test]
    fn nibble_fifteen_mirrors_seven() {
        let mut state = AdpcmState::default();
        assert_eq!(decode_nibble(15, &mut state), -11);
        assert_eq!(state.step_index, 8);
    }

    #[test]
    fn encode_zero_signal() {
        let mut state = AdpcmState::default();
        for _ in 0..16 {
            assert_eq!(encode_sample(0, &mut state), 0);
        }
        let (block, _) = encode_block(&[0; 9], AdpcmState::default());
        assert!(block.payload.iter().all(|&b| b == 0));
    }

    #[test]
    fn encode_single_sample_hundred() {
        let mut state = AdpcmState::default();
        assert_eq!(encode_sample(100, &mut state), 7);
        assert_eq!(state, AdpcmState::new(11, 8));
    }

    #[test]
    fn predictor_clamps_at_rails() {
        let mut state = AdpcmState::new(32760, 88);
        assert_eq!(decode_nibble(7, &mut state), i16::MAX);
        let mut state = AdpcmState::new(-32760, 88);
        assert_eq!(decode_nibble(15, &mut state), i16::MIN);
        assert_eq!(state.step_index, 88);
    }

    #[test]
    fn bad_header_index_rejected() {
        let err = AdpcmBlock::from_bytes(&[0, 0, 89, 0, 0x12]).unwrap_err();
        assert!(matches!(err, CodecError::MalformedBlock(_)));
        let block = AdpcmBlock {
            predictor: 0,
            step_index: 200,
            payload: vec![],
        };
        assert!(decode_block(&block).is_err());
    }

    #[test]
    fn short_header_rejected() {
        assert!(matches!(
            AdpcmBlock::from_bytes(&[1, 2, 3]),
            Err(CodecError::MalformedBlock(_))
        ));
    }

    #[test]
    fn declared_count_beyond_payload_is_truncation() {
        let data = encode_stream(&[0, 10, 20, 30, 40], AdpcmLayout::default());
        assert!(decode_stream(&data, AdpcmLayout::default(), Some(5)).is_ok());
        assert!(matches!(
            decode_stream(&data, AdpcmLayout::default(), Some(50)),
            Err(CodecError::MalformedBlock(_))
        ));
    }

    #[test]
    fn block_bytes_round_trip() {
        let block = AdpcmBlock {
            predictor: -1234,
            step_index: 42,
            payload: vec![0xab, 0xcd],
        };
        assert_eq!(AdpcmBlock::from_bytes(&block.to_bytes()).unwrap(), block);
    }

    #[test]
    fn default_layout_is_505_per_256() {
        assert_eq!(AdpcmLayout::default().samples_per_block(), 505);
        assert!(AdpcmLayout::new(4).is_err());
    }

    #[test]
    fn initial_index_covers_first_step() {
        assert_eq!(initial_step_index(&[0]), 0);
        assert_eq!(initial_step_index(&[0, 10]), 0);
        let idx = initial_step_index(&[0, 100]);
        assert_eq!(STEP_TABLE[usize::from(idx)], 50);
    }
}
