//! Deterministic voice-like cover generation.
//!
//! Tests and simulations need covers with speech-like structure — a pitched
//! buzz with harmonics, syllable-rate amplitude gating, and a noise floor —
//! that are reproducible from a seed alone. This is not a vocoder; it only
//! has to exercise the codecs the way real speech does (non-silent, spectrum
//! falling with frequency, pauses between bursts).

use std::f64::consts::TAU;

use crate::audio::PcmClip;
use crate::codec::{encode_with, CodecId, EncodedStream};
use crate::rng::SplitMix64;

/// Peak amplitude of the synthetic voice, leaving headroom below i16 full
/// scale the way conversational speech recordings do.
const PEAK: f64 = 0.45 * i16::MAX as f64;

/// Synthesizes `samples` samples of seeded voice-like audio at
/// `sample_rate`.
pub fn voice_like(samples: usize, sample_rate: u32, seed: u64) -> PcmClip {
    let mut rng = SplitMix64::new(seed);
    let rate = sample_rate as f64;

    // Per-utterance randomness: base pitch, vibrato, syllable cadence.
    let pitch_base = 95.0 + 90.0 * rng.next_f64(); // Hz
    let vibrato_hz = 4.0 + 2.0 * rng.next_f64();
    let vibrato_depth = 0.5 + 1.5 * rng.next_f64(); // Hz swing
    let syllable_hz = 2.5 + 2.0 * rng.next_f64();
    let voicing_duty = 0.55 + 0.25 * rng.next_f64();
    let harmonic_gains = [1.0, 0.55, 0.30, 0.12];

    let mut phase = 0.0f64;
    let mut out = Vec::with_capacity(samples);
    for n in 0..samples {
        let t = n as f64 / rate;
        let pitch = pitch_base + vibrato_depth * (TAU * vibrato_hz * t).sin();
        phase += TAU * pitch / rate;

        // Raised-cosine syllable gate with silent gaps.
        let cycle = (t * syllable_hz).fract();
        let envelope = if cycle < voicing_duty {
            let x = cycle / voicing_duty;
            0.5 - 0.5 * (TAU * x).cos()
        } else {
            0.0
        };

        let mut sample = 0.0;
        for (k, gain) in harmonic_gains.iter().enumerate() {
            sample += gain * ((k as f64 + 1.0) * phase).sin();
        }
        sample /= harmonic_gains.iter().sum::<f64>();

        // Breath noise: quiet during silence, a little louder when voiced.
        let noise = (rng.next_f64() * 2.0 - 1.0) * (0.004 + 0.02 * envelope);

        let value = PEAK * (envelope * sample + noise);
        out.push(value.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16);
    }
    PcmClip::new(sample_rate, 16, out).expect("synthesized parameters are valid")
}

/// Synthesizes a cover and encodes it with `codec` at its nominal rate,
/// yielding exactly `codes` carrier codes.
pub fn cover_stream(codec: CodecId, codes: usize, seed: u64) -> EncodedStream {
    let clip = voice_like(codes, codec.nominal_rate(), seed);
    encode_with(codec, &clip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_is_deterministic_per_seed() {
        let a = voice_like(4000, 8000, 9);
        let b = voice_like(4000, 8000, 9);
        assert_eq!(a.samples, b.samples);
        let c = voice_like(4000, 8000, 10);
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn output_shape_and_level_are_voice_like() {
        let clip = voice_like(16000, 8000, 3);
        assert_eq!(clip.samples.len(), 16000);
        assert_eq!(clip.sample_rate, 8000);

        let peak = clip.samples.iter().map(|s| s.unsigned_abs()).max().unwrap();
        assert!(peak > 4000, "too quiet: peak {peak}");
        assert!(peak < 20000, "no headroom: peak {peak}");

        // Syllable gating leaves real silence in between.
        let near_silent = clip.samples.iter().filter(|s| s.unsigned_abs() < 300).count();
        assert!(near_silent > 1000, "no pauses: {near_silent} quiet samples");

        // Not mostly silence either.
        let loud = clip.samples.iter().filter(|s| s.unsigned_abs() > 2000).count();
        assert!(loud > 3000, "mostly silence: {loud} loud samples");
    }

    #[test]
    fn cover_stream_yields_exact_code_count() {
        let ulaw = cover_stream(CodecId::Ulaw, 1600, 4);
        assert_eq!(ulaw.len(), 1600);
        assert_eq!(ulaw.codec, CodecId::Ulaw);
        let dvi = cover_stream(CodecId::Dvi, 1500, 4);
        assert_eq!(dvi.len(), 1500);
        assert_eq!(dvi.codec, CodecId::Dvi);
    }
}
