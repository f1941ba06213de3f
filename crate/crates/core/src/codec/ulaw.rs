//! 8-bit μ-law companding.
//!
//! Bias-33 (132 before the 2-bit pre-shift), eight logarithmic segments,
//! complemented output. Negative inputs fold by magnitude, so a sample and its
//! negation always produce codes that differ in exactly the sign bit. Code
//! 0xFF is digital silence (sample 0).

use crate::audio::PcmClip;
use crate::codec::{CodecId, EncodedStream};

pub const ULAW_SAMPLE_RATE: u32 = 8000;

const BIAS: i32 = 0x84; // 33 << 2
const CLIP: i32 = 32635;
const SEG_END: [i32; 8] = [0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF, 0x1FFF, 0x3FFF, 0x7FFF];

/// Compands one 16-bit sample to an 8-bit μ-law code.
pub fn encode_sample(sample: i16) -> u8 {
    let mut pcm = sample as i32;
    let mask = if pcm < 0 {
        pcm = -pcm;
        0x7F
    } else {
        0xFF
    };
    if pcm > CLIP {
        pcm = CLIP;
    }
    pcm += BIAS;

    let mut seg = 0;
    while SEG_END[seg] < pcm {
        seg += 1; // bounded: pcm <= CLIP + BIAS = 0x7FFF = SEG_END[7]
    }
    let uval = ((seg as u8) << 4) | (((pcm >> (seg + 3)) & 0xF) as u8);
    uval ^ mask
}

/// Expands one μ-law code back to a 16-bit sample.
pub fn decode_sample(code: u8) -> i16 {
    let code = !code;
    let seg = ((code >> 4) & 0x7) as i32;
    let mantissa = (code & 0xF) as i32;
    let magnitude = (((mantissa << 3) + BIAS) << seg) - BIAS;
    if code & 0x80 != 0 {
        -magnitude as i16
    } else {
        magnitude as i16
    }
}

pub fn ulaw_encode(clip: &PcmClip) -> EncodedStream {
    EncodedStream {
        codec: CodecId::Ulaw,
        codes: clip.samples.iter().map(|&s| encode_sample(s)).collect(),
    }
}

pub fn ulaw_decode(stream: &EncodedStream) -> PcmClip {
    debug_assert_eq!(stream.codec, CodecId::Ulaw);
    PcmClip {
        sample_rate: ULAW_SAMPLE_RATE,
        bit_depth: 16,
        samples: stream.codes.iter().map(|&c| decode_sample(c)).collect(),
    }
}

/// Quantization spacing (in sample units) of the segment a code belongs to.
#[cfg(test)]
fn segment_spacing(code: u8) -> i32 {
    let seg = ((!code >> 4) & 0x7) as i32;
    8 << seg
}
