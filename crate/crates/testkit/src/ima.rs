//! Straight-line IMA/DVI ADPCM reference, written after the classic public
//! domain C implementation: one loop over all samples, explicit `vpdiff`,
//! table lookups inline. Shares no code with the crate under test.

const STEPS: [i32; 89] = [
    7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37, 41, 45, 50, 55, 60, 66,
    73, 80, 88, 97, 107, 118, 130, 143, 157, 173, 190, 209, 230, 253, 279, 307, 337, 371, 408,
    449, 494, 544, 598, 658, 724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
    2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894, 6484, 7132, 7845, 8630,
    9493, 10442, 11487, 12635, 13899, 15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794,
    32767,
];
const INDEX_ADJUST: [i32; 16] = [-1, -1, -1, -1, 2, 4, 6, 8, -1, -1, -1, -1, 2, 4, 6, 8];

pub fn step(index: u8) -> i32 {
    STEPS[index as usize]
}

/// One decoder step: returns the new (predictor, index).
pub fn decode_step(code: u8, valpred: i32, index: i32) -> (i32, i32) {
    let step = STEPS[index as usize];
    let mut vpdiff = step >> 3;
    if code & 4 != 0 {
        vpdiff += step;
    }
    if code & 2 != 0 {
        vpdiff += step >> 1;
    }
    if code & 1 != 0 {
        vpdiff += step >> 2;
    }
    let valpred = if code & 8 != 0 { valpred - vpdiff } else { valpred + vpdiff }.clamp(-32768, 32767);
    let index = (index + INDEX_ADJUST[code as usize]).clamp(0, 88);
    (valpred, index)
}

/// One encoder step: returns the code and the decoder's new (predictor, index).
pub fn encode_step(sample: i32, valpred: i32, index: i32) -> (u8, i32, i32) {
    let step = STEPS[index as usize];
    let mut diff = sample - valpred;
    let mut code = 0u8;
    if diff < 0 {
        code = 8;
        diff = -diff;
    }
    let mut s = step;
    for bit in [4u8, 2, 1] {
        if diff >= s {
            code |= bit;
            diff -= s;
        }
        s >>= 1;
    }
    let (valpred, index) = decode_step(code, valpred, index);
    (code, valpred, index)
}

/// Result of running the reference over a whole signal.
pub struct RefRun {
    pub decoded: Vec<i16>,
    /// Step size used to code each sample (0 for block seed samples).
    pub steps: Vec<i32>,
    pub codes: Vec<Option<u8>>,
}

/// Codes `x` in blocks of `per_block` samples the way a mono WAV file does:
/// each block's first sample is stored verbatim as the predictor, the step
/// index carries over between blocks and starts at the smallest index whose
/// step is at least half the first difference.
pub fn run(x: &[i16], per_block: usize) -> RefRun {
    let mut out = RefRun {
        decoded: Vec::with_capacity(x.len()),
        steps: Vec::with_capacity(x.len()),
        codes: Vec::with_capacity(x.len()),
    };
    let mut index = match x {
        [a, b, ..] => {
            let d = (i32::from(*b) - i32::from(*a)).abs();
            STEPS.iter().position(|&s| 2 * s >= d).unwrap_or(88) as i32
        }
        _ => 0,
    };
    for block in x.chunks(per_block) {
        let mut valpred = i32::from(block[0]);
        out.decoded.push(block[0]);
        out.steps.push(0);
        out.codes.push(None);
        for &sample in &block[1..] {
            out.steps.push(STEPS[index as usize]);
            let (code, v, i) = encode_step(i32::from(sample), valpred, index);
            valpred = v;
            index = i;
            out.decoded.push(valpred as i16);
            out.codes.push(Some(code));
        }
    }
    out
}

/// Hand-written block decoder for raw block bytes (header + nibbles).
pub fn decode_block_bytes(bytes: &[u8]) -> Vec<i16> {
    let mut valpred = i32::from(i16::from_le_bytes([bytes[0], bytes[1]]));
    let mut index = i32::from(bytes[2]);
    let mut out = vec![valpred as i16];
    for &b in &bytes[4..] {
        for code in [b & 0x0f, b >> 4] {
            let (v, i) = decode_step(code, valpred, index);
            valpred = v;
            index = i;
            out.push(v as i16);
        }
    }
    out
}
