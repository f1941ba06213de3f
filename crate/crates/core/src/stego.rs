//! Bit-plane hiding inside voice code streams.
//!
//! Four placement algorithms overwrite selected bit planes of each carrier
//! code: the two low planes (`Lsb1`, `Lsb2`), the sixth-lowest plane
//! (`Lsb6`, 8-bit carriers only), and the top plane (`Msb`). Embedding is
//! copy-on-write — the cover stream is never mutated, because quality
//! metrics need the pristine original alongside the marked copy.

use std::fmt;
use std::str::FromStr;

use crate::bits::BitString;
use crate::codec::{CodecId, EncodedStream};
use crate::error::{Error, Result};

/// Which bit plane(s) of each carrier code receive hidden bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmbedAlgorithm {
    /// Bit 0 of every code: one hidden bit per code.
    Lsb1,
    /// Bits 1 and 0 of every code: two hidden bits per code, bit 1 first.
    Lsb2,
    /// The top bit of every code: loud but maximal-entropy plane.
    Msb,
    /// Bit 5 of every code; only meaningful on 8-bit carriers.
    Lsb6,
}

pub const ALL_ALGORITHMS: [EmbedAlgorithm; 4] = [
    EmbedAlgorithm::Lsb1,
    EmbedAlgorithm::Lsb2,
    EmbedAlgorithm::Msb,
    EmbedAlgorithm::Lsb6,
];

impl EmbedAlgorithm {
    /// Hidden bits carried per code.
    pub fn bits_per_code(self) -> usize {
        match self {
            EmbedAlgorithm::Lsb2 => 2,
            _ => 1,
        }
    }

    /// Rejects combinations that have no defined target plane.
    pub fn validate_for(self, codec: CodecId) -> Result<()> {
        if self == EmbedAlgorithm::Lsb6 && codec.bits_per_code() != 8 {
            return Err(Error::Unsupported(format!(
                "{self} requires an 8-bit carrier; {codec} codes are {} bits",
                codec.bits_per_code()
            )));
        }
        Ok(())
    }

    /// Target bit index for hidden-bit slot `slot` (0-based within a code).
    fn target_bit(self, slot: usize, code_width: usize) -> usize {
        match self {
            EmbedAlgorithm::Lsb1 => 0,
            EmbedAlgorithm::Lsb2 => 1 - slot,
            EmbedAlgorithm::Msb => code_width - 1,
            EmbedAlgorithm::Lsb6 => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EmbedAlgorithm::Lsb1 => "lsb1",
            EmbedAlgorithm::Lsb2 => "lsb2",
            EmbedAlgorithm::Msb => "msb",
            EmbedAlgorithm::Lsb6 => "lsb6",
        }
    }
}

impl fmt::Display for EmbedAlgorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbedAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lsb1" => Ok(EmbedAlgorithm::Lsb1),
            "lsb2" => Ok(EmbedAlgorithm::Lsb2),
            "msb" => Ok(EmbedAlgorithm::Msb),
            "lsb6" => Ok(EmbedAlgorithm::Lsb6),
            other => Err(Error::Argument(format!(
                "unknown embedding algorithm {other:?} (expected lsb1, lsb2, msb, or lsb6)"
            ))),
        }
    }
}

/// How headers are positioned inside each packet's code stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlacementMode {
    /// Every packet embeds at the same fixed code offset.
    Fixed,
    /// Each packet announces the next packet's code offset in-band.
    Chained,
}

impl fmt::Display for PlacementMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlacementMode::Fixed => "fixed",
            PlacementMode::Chained => "chained",
        })
    }
}

impl FromStr for PlacementMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(PlacementMode::Fixed),
            "chained" => Ok(PlacementMode::Chained),
            other => Err(Error::Argument(format!(
                "unknown placement mode {other:?} (expected fixed or chained)"
            ))),
        }
    }
}

/// Placement policy for a session: mode plus the first packet's offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub mode: PlacementMode,
    pub initial_offset_codes: usize,
}

/// Hidden-bit capacity of a whole stream under `alg`.
pub fn capacity(stream: &EncodedStream, alg: EmbedAlgorithm) -> Result<usize> {
    alg.validate_for(stream.codec)?;
    Ok(stream.len() * alg.bits_per_code())
}

/// Returns a copy of `stream` with `bits` written into the algorithm's
/// target planes, starting at code index `offset_codes`. All untargeted
/// bits are preserved exactly.
pub fn embed_bits(
    stream: &EncodedStream,
    alg: EmbedAlgorithm,
    offset_codes: usize,
    bits: &BitString,
) -> Result<EncodedStream> {
    alg.validate_for(stream.codec)?;
    let per_code = alg.bits_per_code();
    let available = stream.len().saturating_sub(offset_codes) * per_code;
    if bits.len() > available {
        return Err(Error::Capacity {
            needed_bits: bits.len(),
            available_bits: available,
        });
    }
    let width = stream.codec.bits_per_code();
    let mut codes = stream.codes.clone();
    for (i, bit) in bits.iter().enumerate() {
        let code = &mut codes[offset_codes + i / per_code];
        let mask = 1u8 << alg.target_bit(i % per_code, width);
        if bit {
            *code |= mask;
        } else {
            *code &= !mask;
        }
    }
    EncodedStream::new(stream.codec, codes)
}

/// Reads `count` hidden bits back out of `stream`, starting at code index
/// `offset_codes`. Inverse of [`embed_bits`] over the same parameters.
pub fn extract_bits(
    stream: &EncodedStream,
    alg: EmbedAlgorithm,
    offset_codes: usize,
    count: usize,
) -> Result<BitString> {
    alg.validate_for(stream.codec)?;
    let per_code = alg.bits_per_code();
    let available = stream.len().saturating_sub(offset_codes) * per_code;
    if count > available {
        return Err(Error::Capacity {
            needed_bits: count,
            available_bits: available,
        });
    }
    let width = stream.codec.bits_per_code();
    let mut bits = BitString::with_capacity(count);
    for i in 0..count {
        let code = stream.codes[offset_codes + i / per_code];
        let pos = alg.target_bit(i % per_code, width);
        bits.push(code & (1 << pos) != 0);
    }
    Ok(bits)
}

/// Fraction of the stream's total bits that `total_hidden_bits` occupies.
pub fn hidden_fraction(total_hidden_bits: usize, stream: &EncodedStream) -> Result<f64> {
    if stream.is_empty() {
        return Err(Error::Argument(
            "hidden fraction of an empty stream is undefined".into(),
        ));
    }
    Ok(total_hidden_bits as f64 / stream.total_bits() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn ulaw_stream(codes: Vec<u8>) -> EncodedStream {
        EncodedStream::new(CodecId::Ulaw, codes).unwrap()
    }

    fn dvi_stream(codes: Vec<u8>) -> EncodedStream {
        EncodedStream::new(CodecId::Dvi, codes).unwrap()
    }

    fn random_bits(rng: &mut SplitMix64, len: usize) -> BitString {
        let mut bits = BitString::with_capacity(len);
        for _ in 0..len {
            bits.push(rng.next_u64() & 1 == 1);
        }
        bits
    }

    #[test]
    fn capacity_counts_target_planes() {
        assert_eq!(
            capacity(&ulaw_stream(vec![0; 160]), EmbedAlgorithm::Lsb1).unwrap(),
            160
        );
        assert_eq!(
            capacity(&ulaw_stream(vec![0; 160]), EmbedAlgorithm::Lsb2).unwrap(),
            320
        );
        assert_eq!(
            capacity(&dvi_stream(vec![0; 220]), EmbedAlgorithm::Msb).unwrap(),
            220
        );
    }

    #[test]
    fn lsb6_rejected_on_4_bit_carrier() {
        assert!(matches!(
            capacity(&dvi_stream(vec![0; 220]), EmbedAlgorithm::Lsb6),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            embed_bits(
                &dvi_stream(vec![0; 8]),
                EmbedAlgorithm::Lsb6,
                0,
                &"1".parse().unwrap()
            ),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn single_bit_examples() {
        let one: BitString = "1".parse().unwrap();
        let marked =
            embed_bits(&ulaw_stream(vec![0b10110100]), EmbedAlgorithm::Lsb1, 0, &one).unwrap();
        assert_eq!(marked.codes, vec![0b10110101]);

        let marked = embed_bits(&ulaw_stream(vec![0x00]), EmbedAlgorithm::Msb, 0, &one).unwrap();
        assert_eq!(marked.codes, vec![0x80]);

        let marked = embed_bits(&dvi_stream(vec![0x0]), EmbedAlgorithm::Msb, 0, &one).unwrap();
        assert_eq!(marked.codes, vec![0x8]);

        let marked = embed_bits(&ulaw_stream(vec![0x00]), EmbedAlgorithm::Lsb6, 0, &one).unwrap();
        assert_eq!(marked.codes, vec![0x20]);
    }

    #[test]
    fn lsb2_fills_bit_one_then_bit_zero() {
        let marked = embed_bits(
            &ulaw_stream(vec![0x00]),
            EmbedAlgorithm::Lsb2,
            0,
            &"11".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(marked.codes, vec![0x03]);

        // A lone hidden bit lands in bit 1 and leaves bit 0 alone.
        let marked = embed_bits(
            &ulaw_stream(vec![0x01]),
            EmbedAlgorithm::Lsb2,
            0,
            &"1".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(marked.codes, vec![0x03]);

        let marked = embed_bits(
            &ulaw_stream(vec![0xFF]),
            EmbedAlgorithm::Lsb2,
            0,
            &"01".parse().unwrap(),
        )
        .unwrap();
        assert_eq!(marked.codes, vec![0xFD]);
    }

    #[test]
    fn overflow_reports_shortfall() {
        let stream = ulaw_stream(vec![0; 4]);
        let bits = random_bits(&mut SplitMix64::new(1), 9);
        match embed_bits(&stream, EmbedAlgorithm::Lsb2, 0, &bits) {
            Err(Error::Capacity {
                needed_bits,
                available_bits,
            }) => {
                assert_eq!(needed_bits, 9);
                assert_eq!(available_bits, 8);
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
        // Offset past the end leaves zero capacity rather than underflowing.
        assert!(matches!(
            embed_bits(&stream, EmbedAlgorithm::Lsb1, 9, &bits),
            Err(Error::Capacity {
                available_bits: 0,
                ..
            })
        ));
    }

    #[test]
    fn extract_from_zero_stream_is_zero() {
        let bits =
            extract_bits(&ulaw_stream(vec![0; 32]), EmbedAlgorithm::Lsb1, 0, 32).unwrap();
        assert_eq!(bits.len(), 32);
        assert!(bits.iter().all(|b| !b));
    }

    #[test]
    fn extract_zero_count_is_empty() {
        let bits = extract_bits(&ulaw_stream(vec![0xAB]), EmbedAlgorithm::Lsb1, 0, 0).unwrap();
        assert!(bits.is_empty());
    }

    #[test]
    fn round_trip_identity_over_random_cases() {
        let mut rng = SplitMix64::new(0xC0DE);
        for round in 0..300 {
            let codec = if rng.next_u64() & 1 == 0 {
                CodecId::Ulaw
            } else {
                CodecId::Dvi
            };
            let alg = ALL_ALGORITHMS[rng.next_below(4) as usize];
            if alg.validate_for(codec).is_err() {
                continue;
            }
            let len = 40 + rng.next_below(400) as usize;
            let mask = if codec.bits_per_code() == 8 { 0xFF } else { 0x0F };
            let codes: Vec<u8> = (0..len).map(|_| (rng.next_u64() as u8) & mask).collect();
            let stream = EncodedStream::new(codec, codes).unwrap();
            let offset = rng.next_below(32) as usize;
            let max_bits = (len - offset) * alg.bits_per_code();
            let payload_len = rng.next_below(max_bits as u64 + 1) as usize;
            let payload = random_bits(&mut rng, payload_len);

            let marked = embed_bits(&stream, alg, offset, &payload).unwrap();
            let back = extract_bits(&marked, alg, offset, payload.len()).unwrap();
            assert_eq!(back, payload, "round {round}: {codec}/{alg} offset {offset}");
        }
    }

    #[test]
    fn embedding_touches_only_targeted_planes() {
        let mut rng = SplitMix64::new(0xFACE);
        for _ in 0..200 {
            let codec = if rng.next_u64() & 1 == 0 {
                CodecId::Ulaw
            } else {
                CodecId::Dvi
            };
            let alg = ALL_ALGORITHMS[rng.next_below(4) as usize];
            if alg.validate_for(codec).is_err() {
                continue;
            }
            let width = codec.bits_per_code();
            let len = 64 + rng.next_below(128) as usize;
            let mask = if width == 8 { 0xFF } else { 0x0F };
            let codes: Vec<u8> = (0..len).map(|_| (rng.next_u64() as u8) & mask).collect();
            let stream = EncodedStream::new(codec, codes).unwrap();
            let offset = rng.next_below(16) as usize;
            let n = rng.next_below(((len - offset) * alg.bits_per_code()) as u64 + 1) as usize;
            let payload = random_bits(&mut rng, n);
            let marked = embed_bits(&stream, alg, offset, &payload).unwrap();

            let per_code = alg.bits_per_code();
            let touched_end = offset + n.div_ceil(per_code);
            let mut writable = 0u8;
            for slot in 0..per_code {
                writable |= 1 << alg.target_bit(slot, width);
            }
            for (i, (&a, &b)) in stream.codes.iter().zip(&marked.codes).enumerate() {
                if i < offset || i >= touched_end {
                    assert_eq!(a, b, "code {i} outside the embed span changed");
                } else {
                    assert_eq!(a & !writable, b & !writable, "untargeted plane changed at {i}");
                }
            }
        }
    }

    #[test]
    fn hidden_fraction_examples() {
        let stream = ulaw_stream(vec![0; 60]); // 480 total bits
        let f = hidden_fraction(16, &stream).unwrap();
        assert!((f - 16.0 / 480.0).abs() < 1e-12);
        assert!((f * 100.0 - 3.333).abs() < 1e-3);
        assert_eq!(hidden_fraction(0, &stream).unwrap(), 0.0);
        assert!(matches!(
            hidden_fraction(1, &ulaw_stream(vec![])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in ALL_ALGORITHMS {
            assert_eq!(alg.name().parse::<EmbedAlgorithm>().unwrap(), alg);
        }
        assert_eq!("LSB1".parse::<EmbedAlgorithm>().unwrap(), EmbedAlgorithm::Lsb1);
        assert!("lsb3".parse::<EmbedAlgorithm>().is_err());
        assert_eq!("fixed".parse::<PlacementMode>().unwrap(), PlacementMode::Fixed);
        assert_eq!("CHAINED".parse::<PlacementMode>().unwrap(), PlacementMode::Chained);
        assert!("floating".parse::<PlacementMode>().is_err());
    }
}
