//! Carrier voice codecs.
//!
//! Two codecs carry the covert channel: 8-bit μ-law companding (G.711 family)
//! and 4-bit IMA/DVI ADPCM. Both expose their raw code units, because the
//! embedding layer works on code values, not decoded samples.

pub mod adpcm;
pub mod ulaw;

use crate::audio::PcmClip;
use crate::error::{Error, Result};
use std::fmt;

pub use adpcm::{dvi_decode, dvi_encode, AdpcmState, DVI_SAMPLE_RATE};
pub use ulaw::{ulaw_decode, ulaw_encode, ULAW_SAMPLE_RATE};

/// Which codec produced a stream of code units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CodecId {
    /// 8-bit μ-law companded codes, nominally 8 kHz.
    Ulaw,
    /// 4-bit IMA/DVI ADPCM codes, nominally 11 kHz.
    Dvi,
}

impl CodecId {
    pub fn bits_per_code(self) -> usize {
        match self {
            CodecId::Ulaw => 8,
            CodecId::Dvi => 4,
        }
    }

    /// Code value that decodes to (near) silence; used to fill loss gaps.
    pub fn silence_code(self) -> u8 {
        match self {
            CodecId::Ulaw => 0xFF,
            CodecId::Dvi => 0x0,
        }
    }

    /// Nominal sample rate the codec is operated at in this crate.
    pub fn nominal_rate(self) -> u32 {
        match self {
            CodecId::Ulaw => ULAW_SAMPLE_RATE,
            CodecId::Dvi => DVI_SAMPLE_RATE,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodecId::Ulaw => "ulaw",
            CodecId::Dvi => "dvi",
        }
    }
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CodecId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ulaw" | "mulaw" | "u-law" => Ok(CodecId::Ulaw),
            "dvi" | "dvi4" | "adpcm" => Ok(CodecId::Dvi),
            other => Err(Error::Argument(format!(
                "unknown codec {other:?} (expected ulaw or dvi)"
            ))),
        }
    }
}

/// Ordered code units from one codec. Every code fits the codec's bit width.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedStream {
    pub codec: CodecId,
    pub codes: Vec<u8>,
}

impl EncodedStream {
    pub fn new(codec: CodecId, codes: Vec<u8>) -> Result<Self> {
        let limit = 1u16 << codec.bits_per_code();
        if let Some(&bad) = codes.iter().find(|&&c| c as u16 >= limit) {
            return Err(Error::Argument(format!(
                "code {bad:#x} exceeds the {}-bit width of {codec}",
                codec.bits_per_code()
            )));
        }
        Ok(EncodedStream { codec, codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn bits_per_code(&self) -> usize {
        self.codec.bits_per_code()
    }

    /// Total number of bits carried by all codes.
    pub fn total_bits(&self) -> usize {
        self.codes.len() * self.bits_per_code()
    }

    /// Decodes back to audio with each codec's standard reconstruction.
    pub fn decode(&self) -> PcmClip {
        match self.codec {
            CodecId::Ulaw => ulaw_decode(self),
            CodecId::Dvi => dvi_decode(self, &mut AdpcmState::default()),
        }
    }
}

/// Encodes a clip with the named codec from a fresh codec state.
pub fn encode_with(codec: CodecId, clip: &PcmClip) -> EncodedStream {
    match codec {
        CodecId::Ulaw => ulaw_encode(clip),
        CodecId::Dvi => dvi_encode(clip, &mut AdpcmState::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_rejects_codes_wider_than_codec() {
        assert!(EncodedStream::new(CodecId::Dvi, vec![0x0F]).is_ok());
        assert!(matches!(
            EncodedStream::new(CodecId::Dvi, vec![0x10]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn total_bits_accounts_for_code_width() {
        let u = EncodedStream::new(CodecId::Ulaw, vec![0; 10]).unwrap();
        let d = EncodedStream::new(CodecId::Dvi, vec![0; 10]).unwrap();
        assert_eq!(u.total_bits(), 80);
        assert_eq!(d.total_bits(), 40);
    }

    #[test]
    fn silence_codes_decode_quietly() {
        for codec in [CodecId::Ulaw, CodecId::Dvi] {
            let stream = EncodedStream::new(codec, vec![codec.silence_code(); 50]).unwrap();
            let clip = stream.decode();
            assert!(
                clip.samples.iter().all(|&s| s.unsigned_abs() <= 7),
                "{codec} silence decodes loud: {:?}",
                &clip.samples[..5]
            );
        }
    }
}
