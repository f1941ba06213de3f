//! 4-bit IMA/DVI ADPCM.
//!
//! Classic IMA state machine: a predictor plus an 89-entry step-size table
//! indexed adaptively per code. Encoder and decoder share the reconstruction
//! arithmetic, so chaining state across arbitrary buffer boundaries is exact.

use crate::audio::PcmClip;
use crate::codec::{CodecId, EncodedStream};

pub const DVI_SAMPLE_RATE: u32 = 11025;

const STEP_TABLE: [i32; 89] = [
    7, 8, 9, 10, 11, 12, 13, 14, 16, 17, 19, 21, 23, 25, 28, 31, 34, 37, 41, 45, 50, 55, 60, 66,
    73, 80, 88, 97, 107, 118, 130, 143, 157, 173, 190, 209, 230, 253, 279, 307, 337, 371, 408,
    449, 494, 544, 598, 658, 724, 796, 876, 963, 1060, 1166, 1282, 1411, 1552, 1707, 1878, 2066,
    2272, 2499, 2749, 3024, 3327, 3660, 4026, 4428, 4871, 5358, 5894, 6484, 7132, 7845, 8630,
    9493, 10442, 11487, 12635, 13899, 15289, 16818, 18500, 20350, 22385, 24623, 27086, 29794,
    32767,
];

const INDEX_ADJUST: [i32; 8] = [-1, -1, -1, -1, 2, 4, 6, 8];

/// Predictor state carried across codes (and across packet boundaries).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct AdpcmState {
    pub predictor: i32,
    pub step_index: i32,
}

impl AdpcmState {
    /// Applies one 4-bit code: updates the predictor exactly the way the
    /// decoder reconstructs, and adapts the step index.
    fn advance(&mut self, code: u8) -> i16 {
        let step = STEP_TABLE[self.step_index as usize];
        let mut diff = step >> 3;
        if code & 4 != 0 {
            diff += step;
        }
        if code & 2 != 0 {
            diff += step >> 1;
        }
        if code & 1 != 0 {
            diff += step >> 2;
        }
        if code & 8 != 0 {
            self.predictor -= diff;
        } else {
            self.predictor += diff;
        }
        self.predictor = self.predictor.clamp(i16::MIN as i32, i16::MAX as i32);
        self.step_index =
            (self.step_index + INDEX_ADJUST[(code & 7) as usize]).clamp(0, 88);
        self.predictor as i16
    }

    /// Quantizes one sample against the current prediction.
    fn encode_sample(&mut self, sample: i16) -> u8 {
        let step = STEP_TABLE[self.step_index as usize];
        let mut diff = sample as i32 - self.predictor;
        let mut code = 0u8;
        if diff < 0 {
            code = 8;
            diff = -diff;
        }
        if diff >= step {
            code |= 4;
            diff -= step;
        }
        if diff >= step >> 1 {
            code |= 2;
            diff -= step >> 1;
        }
        if diff >= step >> 2 {
            code |= 1;
        }
        self.advance(code);
        code
    }
}

/// Encodes a clip, continuing from (and updating) the caller's codec state.
pub fn dvi_encode(clip: &PcmClip, state: &mut AdpcmState) -> EncodedStream {
    EncodedStream {
        codec: CodecId::Dvi,
        codes: clip
            .samples
            .iter()
            .map(|&s| state.encode_sample(s))
            .collect(),
    }
}

/// Decodes a stream, continuing from (and updating) the caller's codec state.
/// The clip is stamped with the crate's nominal DVI rate.
pub fn dvi_decode(stream: &EncodedStream, state: &mut AdpcmState) -> PcmClip {
    debug_assert_eq!(stream.codec, CodecId::Dvi);
    PcmClip {
        sample_rate: DVI_SAMPLE_RATE,
        bit_depth: 16,
        samples: stream.codes.iter().map(|&c| state.advance(c)).collect(),
    }
}
