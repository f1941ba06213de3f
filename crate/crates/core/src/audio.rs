//! WAV ingestion and emission plus minimal rate conversion.
//!
//! Input side accepts any uncompressed PCM WAV (8- or 16-bit, mono or stereo)
//! by walking RIFF chunks; everything is normalized into a mono, 16-bit-range
//! [`PcmClip`]. Output side always emits the canonical 44-byte-header mono PCM
//! layout. Rate conversion is nearest-neighbor only — voice-band covers do not
//! justify a polyphase resampler here.

use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

/// Mono audio in 16-bit sample range.
///
/// Invariants: `sample_rate > 0`; `bit_depth` is 8 or 16; samples from 8-bit
/// sources are widened by ×256 (sign-preserving), so they are exact multiples
/// of 256.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PcmClip {
    pub sample_rate: u32,
    pub bit_depth: u16,
    pub samples: Vec<i16>,
}

impl PcmClip {
    pub fn new(sample_rate: u32, bit_depth: u16, samples: Vec<i16>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Argument("sample rate must be non-zero".into()));
        }
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::Unsupported(format!(
                "bit depth {bit_depth} (only 8 and 16 are handled)"
            )));
        }
        Ok(PcmClip {
            sample_rate,
            bit_depth,
            samples,
        })
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Parses a PCM WAV image. Stereo is downmixed by per-pair averaging with the
/// quotient rounded toward zero; 8-bit samples are widened to the 16-bit range.
pub fn parse_wav(bytes: &[u8]) -> Result<PcmClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE signature".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Format("chunk size exceeds file length".into()))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Format("fmt chunk shorter than 16 bytes".into()));
                }
                let audio_format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((audio_format, channels, rate, bits));
            }
            b"data" => {
                data = Some(body);
                break;
            }
            _ => {} // LIST, fact, cue... — skip
        }
        // RIFF chunks are word-aligned; odd bodies carry a pad byte.
        pos = body_end + (size & 1);
    }

    let (audio_format, channels, rate, bits) =
        fmt.ok_or_else(|| Error::Format("no fmt chunk before data".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;

    if audio_format != 1 {
        return Err(Error::Unsupported(format!(
            "WAV audio format {audio_format} (only uncompressed PCM is handled)"
        )));
    }
    if channels == 0 || channels > 2 {
        return Err(Error::Unsupported(format!("{channels}-channel WAV")));
    }
    if rate == 0 {
        return Err(Error::Format("sample rate 0".into()));
    }

    let samples = match bits {
        16 => {
            let frame = 2 * channels as usize;
            let count = data.len() / frame;
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                let at = i * frame;
                let l = i16::from_le_bytes([data[at], data[at + 1]]) as i32;
                let v = if channels == 2 {
                    let r = i16::from_le_bytes([data[at + 2], data[at + 3]]) as i32;
                    (l + r) / 2 // truncates toward zero
                } else {
                    l
                };
                out.push(v as i16);
            }
            out
        }
        8 => {
            // 8-bit WAV samples are unsigned. Downmix in the byte domain so
            // widened samples stay exact multiples of 256.
            let frame = channels as usize;
            let count = data.len() / frame;
            let mut out = Vec::with_capacity(count);
            for i in 0..count {
                let at = i * frame;
                let v = if channels == 2 {
                    (data[at] as u16 + data[at + 1] as u16) / 2
                } else {
                    data[at] as u16
                };
                out.push((v as i16 - 128) * 256);
            }
            out
        }
        other => {
            return Err(Error::Unsupported(format!(
                "{other}-bit WAV (only 8 and 16 are handled)"
            )));
        }
    };

    PcmClip::new(rate, bits, samples)
}

pub fn read_wav(path: &Path) -> Result<PcmClip> {
    parse_wav(&fs::read(path)?)
}

/// Canonical mono PCM WAV image: fixed 44-byte header, little-endian samples.
pub fn wav_bytes(clip: &PcmClip) -> Vec<u8> {
    let bytes_per_sample = (clip.bit_depth / 8) as u32;
    let data_len = clip.samples.len() as u32 * bytes_per_sample;
    let mut out = Vec::with_capacity(44 + data_len as usize + 1);

    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * bytes_per_sample).to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&clip.bit_depth.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &clip.samples {
        if clip.bit_depth == 16 {
            out.extend_from_slice(&s.to_le_bytes());
        } else {
            out.push((s / 256 + 128) as u8);
        }
    }
    if data_len & 1 == 1 {
        out.push(0); // RIFF word-alignment pad, not counted in data size
    }
    out
}

pub fn write_wav(clip: &PcmClip, path: &Path) -> Result<()> {
    fs::write(path, wav_bytes(clip))?;
    Ok(())
}

/// Nearest-neighbor rate conversion. Output length is `len·target/source`
/// rounded to nearest; sample `i` copies the input at `floor(i·source/target)`.
pub fn resample_nearest(clip: &PcmClip, target_rate: u32) -> Result<PcmClip> {
    if target_rate == 0 {
        return Err(Error::Argument("target rate must be non-zero".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = clip.sample_rate as u64;
    let dst = target_rate as u64;
    let out_len = ((clip.samples.len() as u64 * dst + src / 2) / src) as usize;
    let mut samples = Vec::with_capacity(out_len);
    for i in 0..out_len as u64 {
        let j = ((i * src / dst) as usize).min(clip.samples.len() - 1);
        samples.push(clip.samples[j]);
    }
    PcmClip::new(target_rate, clip.bit_depth, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_16_mono(rate: u32, samples: &[i16]) -> Vec<u8> {
        wav_bytes(&PcmClip::new(rate, 16, samples.to_vec()).unwrap())
    }

    #[test]
    fn one_sample_wav_parses_to_expected_clip() {
        let clip = parse_wav(&wav_16_mono(8000, &[0])).unwrap();
        assert_eq!(clip.sample_rate, 8000);
        assert_eq!(clip.bit_depth, 16);
        assert_eq!(clip.samples, vec![0]);
    }

    #[test]
    fn two_sample_clip_writes_48_bytes() {
        let bytes = wav_16_mono(8000, &[0, 0]);
        assert_eq!(bytes.len(), 48); // 44 header + 4 data
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 4);
    }

    #[test]
    fn read_write_identity_16_bit() {
        let clip = PcmClip::new(8000, 16, vec![0, 1, -1, 32767, -32768, 12345]).unwrap();
        assert_eq!(parse_wav(&wav_bytes(&clip)).unwrap(), clip);
    }

    #[test]
    fn read_write_identity_8_bit() {
        let clip = PcmClip::new(11025, 8, vec![0, 256, -256, 32512, -32768]).unwrap();
        assert_eq!(parse_wav(&wav_bytes(&clip)).unwrap(), clip);
    }

    #[test]
    fn stereo_downmix_averages_toward_zero() {
        // Hand-build a 16-bit stereo file: pairs (100, 101) and (-100, -101).
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes()); // stereo
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&8u32.to_le_bytes());
        for v in [100i16, 101, -100, -101] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let clip = parse_wav(&bytes).unwrap();
        // (100+101)/2 = 100 (floor), (-100-101)/2 = -100 (toward zero)
        assert_eq!(clip.samples, vec![100, -100]);
    }

    #[test]
    fn stereo_downmix_of_identical_channels_is_identity() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&(36u32 + 8).to_le_bytes());
        bytes.extend_from_slice(b"WAVEfmt ");
        bytes.extend_from_slice(&16u32.to_le_bytes());
        bytes.extend_from_slice(&1u16.to_le_bytes());
        bytes.extend_from_slice(&2u16.to_le_bytes());
        bytes.extend_from_slice(&8000u32.to_le_bytes());
        bytes.extend_from_slice(&32000u32.to_le_bytes());
        bytes.extend_from_slice(&4u16.to_le_bytes());
        bytes.extend_from_slice(&16u16.to_le_bytes());
        bytes.extend_from_slice(b"data");
        bytes.extend_from_slice(&8u32.to_le_bytes());
        for v in [-12345i16, -12345, 321, 321] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        assert_eq!(parse_wav(&bytes).unwrap().samples, vec![-12345, 321]);
    }

    #[test]
    fn rejects_missing_signature() {
        assert!(matches!(
            parse_wav(b"RIFXxxxxWAVE"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn rejects_compressed_format() {
        let mut bytes = wav_16_mono(8000, &[0]);
        bytes[20] = 2; // audio format 2 (ADPCM container — not raw PCM)
        assert!(matches!(parse_wav(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn rejects_exotic_bit_depth() {
        let mut bytes = wav_16_mono(8000, &[0]);
        bytes[34] = 24;
        assert!(matches!(parse_wav(&bytes), Err(Error::Unsupported(_))));
    }

    #[test]
    fn skips_unknown_chunks_before_data() {
        let inner = wav_16_mono(8000, &[7, -7]);
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"RIFF");
        bytes.extend_from_slice(&0u32.to_le_bytes()); // size field unused by parser
        bytes.extend_from_slice(b"WAVE");
        bytes.extend_from_slice(&inner[12..36]); // fmt chunk
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(b"abc\0"); // odd size + pad
        bytes.extend_from_slice(&inner[36..]); // data chunk
        assert_eq!(parse_wav(&bytes).unwrap().samples, vec![7, -7]);
    }

    #[test]
    fn downsample_by_two_keeps_every_other_sample() {
        let clip = PcmClip::new(8000, 16, vec![10, 20, 30, 40]).unwrap();
        let out = resample_nearest(&clip, 4000).unwrap();
        assert_eq!(out.sample_rate, 4000);
        assert_eq!(out.samples, vec![10, 30]);
    }

    #[test]
    fn upsample_by_two_repeats_each_sample() {
        let clip = PcmClip::new(4000, 16, vec![10, 20]).unwrap();
        let out = resample_nearest(&clip, 8000).unwrap();
        assert_eq!(out.samples, vec![10, 10, 20, 20]);
    }

    #[test]
    fn resample_to_same_rate_is_identity() {
        let clip = PcmClip::new(8000, 16, vec![1, 2, 3]).unwrap();
        assert_eq!(resample_nearest(&clip, 8000).unwrap(), clip);
    }

    #[test]
    fn resample_length_rounds_to_nearest() {
        let clip = PcmClip::new(8000, 16, vec![0; 8000]).unwrap();
        assert_eq!(resample_nearest(&clip, 11025).unwrap().samples.len(), 11025);
        let clip = PcmClip::new(11025, 16, vec![0; 11025]).unwrap();
        assert_eq!(resample_nearest(&clip, 8000).unwrap().samples.len(), 8000);
    }
}
