//! Carrier-degradation metrics.
//!
//! All metrics compare the untouched cover stream against the marked copy
//! *in the code domain* — squared differences of code values, not decoded
//! PCM. A decoded-sample variant of each metric is provided for
//! listening-oriented analysis. Perceptual scoring (MOS-LQO) is not
//! implemented here; an operator-supplied external tool can be invoked to
//! fill that column.

use std::fmt;
use std::path::Path;
use std::process::Command;

use crate::audio::PcmClip;
use crate::codec::EncodedStream;
use crate::error::{Error, Result};
use crate::header::HeaderDesign;
use crate::stego::EmbedAlgorithm;

/// A decibel figure, or the distinguished value for a zero-noise pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DbValue {
    Finite(f64),
    /// Streams were identical: the ratio has no finite logarithm.
    Identical,
}

impl DbValue {
    /// The finite value, if there is one.
    pub fn finite(self) -> Option<f64> {
        match self {
            DbValue::Finite(v) => Some(v),
            DbValue::Identical => None,
        }
    }
}

impl fmt::Display for DbValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DbValue::Finite(v) => write!(f, "{v:.3}"),
            DbValue::Identical => f.write_str("identical"),
        }
    }
}

fn aligned_sums(cover: &[f64], marked: &[f64]) -> Result<(f64, f64, usize)> {
    if cover.len() != marked.len() {
        return Err(Error::Argument(format!(
            "stream lengths differ: {} vs {}",
            cover.len(),
            marked.len()
        )));
    }
    if cover.is_empty() {
        return Err(Error::Argument("metrics over empty streams are undefined".into()));
    }
    let mut signal = 0.0;
    let mut noise = 0.0;
    for (&a, &b) in cover.iter().zip(marked) {
        signal += a * a;
        let d = a - b;
        noise += d * d;
    }
    Ok((signal, noise, cover.len()))
}

fn check_same_codec(cover: &EncodedStream, marked: &EncodedStream) -> Result<()> {
    if cover.codec != marked.codec {
        return Err(Error::Argument(format!(
            "codec mismatch: {} vs {}",
            cover.codec, marked.codec
        )));
    }
    Ok(())
}

fn codes_f64(stream: &EncodedStream) -> Vec<f64> {
    stream.codes.iter().map(|&c| c as f64).collect()
}

/// Mean squared error between code streams.
pub fn mse(cover: &EncodedStream, marked: &EncodedStream) -> Result<f64> {
    check_same_codec(cover, marked)?;
    let (_, noise, n) = aligned_sums(&codes_f64(cover), &codes_f64(marked))?;
    Ok(noise / n as f64)
}

/// Signal-to-noise ratio between code streams, in dB.
pub fn snr_db(cover: &EncodedStream, marked: &EncodedStream) -> Result<DbValue> {
    check_same_codec(cover, marked)?;
    let (signal, noise, _) = aligned_sums(&codes_f64(cover), &codes_f64(marked))?;
    if signal == 0.0 {
        return Err(Error::Argument("cover stream is all-zero".into()));
    }
    if noise == 0.0 {
        return Ok(DbValue::Identical);
    }
    Ok(DbValue::Finite(10.0 * (signal / noise).log10()))
}

/// Peak signal-to-noise ratio between code streams, in dB. The peak is the
/// largest representable code (255 for 8-bit carriers, 15 for 4-bit).
pub fn psnr_db(cover: &EncodedStream, marked: &EncodedStream) -> Result<DbValue> {
    let peak = ((1usize << cover.bits_per_code()) - 1) as f64;
    let m = mse(cover, marked)?;
    if m == 0.0 {
        return Ok(DbValue::Identical);
    }
    Ok(DbValue::Finite(10.0 * (peak * peak / m).log10()))
}

/// The embedding-independent gap `PSNR − SNR = 10·log10(peak²·N / Σ cover²)`
/// of a given cover. Any marked copy of that cover exhibits exactly this
/// difference between its two ratios.
pub fn psnr_snr_gap_db(cover: &EncodedStream) -> Result<f64> {
    let codes = codes_f64(cover);
    let (signal, _, n) = aligned_sums(&codes, &codes)?;
    if signal == 0.0 {
        return Err(Error::Argument("cover stream is all-zero".into()));
    }
    let peak = ((1usize << cover.bits_per_code()) - 1) as f64;
    Ok(10.0 * (peak * peak * n as f64 / signal).log10())
}

/// Decoded-sample (listening-domain) mean squared error.
pub fn pcm_mse(cover: &PcmClip, marked: &PcmClip) -> Result<f64> {
    let a: Vec<f64> = cover.samples.iter().map(|&s| s as f64).collect();
    let b: Vec<f64> = marked.samples.iter().map(|&s| s as f64).collect();
    let (_, noise, n) = aligned_sums(&a, &b)?;
    Ok(noise / n as f64)
}

/// Decoded-sample signal-to-noise ratio in dB.
pub fn pcm_snr_db(cover: &PcmClip, marked: &PcmClip) -> Result<DbValue> {
    let a: Vec<f64> = cover.samples.iter().map(|&s| s as f64).collect();
    let b: Vec<f64> = marked.samples.iter().map(|&s| s as f64).collect();
    let (signal, noise, _) = aligned_sums(&a, &b)?;
    if signal == 0.0 {
        return Err(Error::Argument("cover clip is silent".into()));
    }
    if noise == 0.0 {
        return Ok(DbValue::Identical);
    }
    Ok(DbValue::Finite(10.0 * (signal / noise).log10()))
}

/// Decoded-sample peak signal-to-noise ratio in dB (peak 32767).
pub fn pcm_psnr_db(cover: &PcmClip, marked: &PcmClip) -> Result<DbValue> {
    let m = pcm_mse(cover, marked)?;
    if m == 0.0 {
        return Ok(DbValue::Identical);
    }
    let peak = i16::MAX as f64;
    Ok(DbValue::Finite(10.0 * (peak * peak / m).log10()))
}

/// One quality-comparison row: how much a configuration degraded its cover.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub codec: crate::codec::CodecId,
    pub alg: EmbedAlgorithm,
    pub header_design: HeaderDesign,
    /// Hidden bits as a fraction of the cover's total bits (0.00417 = 0.417%).
    pub hidden_fraction: f64,
    pub mse: f64,
    pub snr_db: DbValue,
    pub psnr_db: DbValue,
    /// Perceptual score from an external tool, when one was supplied.
    pub mos_lqo: Option<f64>,
}

/// Column header matching [`MetricsReport::csv_row`].
pub const CSV_HEADER: &str = "codec,algorithm,hidden-bits %,MSE,SNR dB,PSNR dB,MOS-LQO";

impl MetricsReport {
    /// Serializes the row in [`CSV_HEADER`] column order.
    pub fn csv_row(&self) -> String {
        let mos = match self.mos_lqo {
            Some(score) => format!("{score:.3}"),
            None => "n/a".to_string(),
        };
        format!(
            "{},{},{:.3}%,{:.3},{},{},{}",
            self.codec,
            self.alg,
            self.hidden_fraction * 100.0,
            self.mse,
            self.snr_db,
            self.psnr_db,
            mos
        )
    }
}

/// Assembles the full metric set for one cover/marked pair.
pub fn build_report(
    alg: EmbedAlgorithm,
    header_design: HeaderDesign,
    cover: &EncodedStream,
    marked: &EncodedStream,
    hidden_bits_total: usize,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        codec: cover.codec,
        alg,
        header_design,
        hidden_fraction: crate::stego::hidden_fraction(hidden_bits_total, cover)?,
        mse: mse(cover, marked)?,
        snr_db: snr_db(cover, marked)?,
        psnr_db: psnr_db(cover, marked)?,
        mos_lqo: None,
    })
}

/// Runs an external perceptual scorer on a reference/degraded WAV pair and
/// parses the score from its first non-empty output line (last token).
pub fn score_with_tool(tool: &Path, reference_wav: &Path, degraded_wav: &Path) -> Result<f64> {
    let output = Command::new(tool)
        .arg(reference_wav)
        .arg(degraded_wav)
        .output()?;
    if !output.status.success() {
        return Err(Error::Format(format!(
            "scoring tool {} exited with {}",
            tool.display(),
            output.status
        )));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let line = stdout
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .ok_or_else(|| Error::Format("scoring tool produced no output".into()))?;
    let token = line
        .split_whitespace()
        .last()
        .ok_or_else(|| Error::Format("scoring tool produced an empty line".into()))?;
    token.parse::<f64>().map_err(|_| {
        Error::Format(format!("scoring tool output {line:?} has no trailing score"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecId;
    use crate::rng::SplitMix64;
    use crate::stego::{embed_bits, EmbedAlgorithm};

    fn ulaw(codes: Vec<u8>) -> EncodedStream {
        EncodedStream::new(CodecId::Ulaw, codes).unwrap()
    }

    #[test]
    fn identical_streams_have_zero_mse_and_sentinels() {
        let a = ulaw(vec![1, 2, 3, 4]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(snr_db(&a, &a).unwrap(), DbValue::Identical);
        assert_eq!(psnr_db(&a, &a).unwrap(), DbValue::Identical);
    }

    #[test]
    fn mse_of_single_unit_difference() {
        let cover = ulaw(vec![0, 2]);
        let marked = ulaw(vec![1, 2]);
        assert_eq!(mse(&cover, &marked).unwrap(), 0.5);
    }

    #[test]
    fn snr_example_and_three_db_per_doubling() {
        let cover = ulaw(vec![10, 10]);
        let marked = ulaw(vec![11, 10]);
        let snr = snr_db(&cover, &marked).unwrap().finite().unwrap();
        assert!((snr - 10.0 * 200.0f64.log10()).abs() < 1e-12);
        assert!((snr - 23.0103).abs() < 1e-3);

        let cover = ulaw(vec![10; 4]);
        let one = snr_db(&cover, &ulaw(vec![11, 10, 10, 10])).unwrap().finite().unwrap();
        let two = snr_db(&cover, &ulaw(vec![11, 11, 10, 10])).unwrap().finite().unwrap();
        assert!((one - two - 3.0103).abs() < 1e-4);
    }

    #[test]
    fn psnr_uses_codec_peak() {
        // MSE pinned to 0.017 via 17 unit errors over 1000 codes.
        let mut marked_codes = vec![0u8; 1000];
        for slot in marked_codes.iter_mut().take(17) {
            *slot = 1;
        }
        let cover = ulaw(vec![0; 1000]);
        let marked = ulaw(marked_codes);
        let psnr = psnr_db(&cover, &marked).unwrap().finite().unwrap();
        assert!((psnr - 10.0 * (255.0f64 * 255.0 / 0.017).log10()).abs() < 1e-12);
        assert!((psnr - 65.826).abs() < 0.01);

        // Same error pattern on the 4-bit carrier uses peak 15.
        let cover = EncodedStream::new(CodecId::Dvi, vec![0; 1000]).unwrap();
        let mut codes = vec![0u8; 1000];
        for slot in codes.iter_mut().take(17) {
            *slot = 1;
        }
        let marked = EncodedStream::new(CodecId::Dvi, codes).unwrap();
        let psnr = psnr_db(&cover, &marked).unwrap().finite().unwrap();
        assert!((psnr - 10.0 * (15.0f64 * 15.0 / 0.017).log10()).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_and_empty_rejected() {
        assert!(matches!(
            mse(&ulaw(vec![1, 2]), &ulaw(vec![1])),
            Err(Error::Argument(_))
        ));
        assert!(matches!(mse(&ulaw(vec![]), &ulaw(vec![])), Err(Error::Argument(_))));
        assert!(matches!(
            snr_db(&ulaw(vec![0, 0]), &ulaw(vec![1, 0])),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn psnr_snr_gap_matches_identity_at_every_rate() {
        let mut rng = SplitMix64::new(77);
        let codes: Vec<u8> = (0..4000).map(|_| rng.next_u64() as u8).collect();
        let cover = ulaw(codes);
        let gap = psnr_snr_gap_db(&cover).unwrap();
        for payload_bits in [40usize, 400, 1200, 2400, 4000] {
            let mut payload = crate::bits::BitString::new();
            for _ in 0..payload_bits {
                payload.push(rng.next_u64() & 1 == 1);
            }
            let marked = embed_bits(&cover, EmbedAlgorithm::Lsb1, 0, &payload).unwrap();
            if mse(&cover, &marked).unwrap() == 0.0 {
                continue;
            }
            let snr = snr_db(&cover, &marked).unwrap().finite().unwrap();
            let psnr = psnr_db(&cover, &marked).unwrap().finite().unwrap();
            assert!(
                ((psnr - snr) - gap).abs() < 1e-9,
                "gap drifted at {payload_bits} bits"
            );
        }
    }

    #[test]
    fn report_row_formats_like_the_reference_tables() {
        let cover = ulaw(vec![100; 3840 / 8]); // 480 codes = 3840 bits
        let mut payload = crate::bits::BitString::new();
        for i in 0..16 {
            payload.push(i % 2 == 0);
        }
        let marked = embed_bits(&cover, EmbedAlgorithm::Lsb1, 0, &payload).unwrap();
        let report = build_report(
            EmbedAlgorithm::Lsb1,
            HeaderDesign::Static,
            &cover,
            &marked,
            16,
        )
        .unwrap();
        let row = report.csv_row();
        assert!(row.starts_with("ulaw,lsb1,0.417%,"), "row was {row}");
        assert!(row.ends_with(",n/a"));
        assert_eq!(row.split(',').count(), CSV_HEADER.split(',').count());
    }

    #[test]
    fn zero_embedding_report_uses_sentinels() {
        let cover = ulaw(vec![7; 100]);
        let report = build_report(
            EmbedAlgorithm::Lsb1,
            HeaderDesign::Dynamic,
            &cover,
            &cover,
            0,
        )
        .unwrap();
        assert_eq!(report.mse, 0.0);
        assert_eq!(report.snr_db, DbValue::Identical);
        let row = report.csv_row();
        assert!(row.contains("identical,identical"), "row was {row}");
    }

    #[test]
    fn pcm_domain_metrics_cover_the_same_contracts() {
        let cover = PcmClip::new(8000, 16, vec![1000, -1000, 500, 0]).unwrap();
        let marked = PcmClip::new(8000, 16, vec![1001, -1000, 500, 0]).unwrap();
        assert_eq!(pcm_mse(&cover, &marked).unwrap(), 0.25);
        assert!(pcm_snr_db(&cover, &marked).unwrap().finite().unwrap() > 60.0);
        assert_eq!(pcm_psnr_db(&cover, &cover).unwrap(), DbValue::Identical);
    }
}
