//! The five commands: live `send`/`recv` endpoints over UDP, the in-process
//! `simulate` sweep, the `capacity` calculator, and the `analyze` WAV
//! comparator.
//!
//! Conventions shared by all commands:
//! - machine-readable results (CSV rows) go to stdout and, when `--report`
//!   is given, to that file as the same bytes;
//! - warnings and hints go to stderr;
//! - errors map to exit classes in `main`: configuration problems exit 2,
//!   capacity shortfalls exit 3, transport and protocol failures exit 4.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use undertone::audio::{read_wav, resample_nearest, write_wav, PcmClip};
use undertone::chunks::DAT_TAG_BITS;
use undertone::codec::encode_with;
use undertone::engine::SessionConfig;
use undertone::header::DATA_BITS;
use undertone::metrics::{
    build_report, pcm_mse, pcm_psnr_db, pcm_snr_db, score_with_tool, MetricsReport, CSV_HEADER,
};
use undertone::scenario::Direction;
use undertone::stego::ALL_ALGORITHMS;
use undertone::transport::{LossModel, UdpChannel};
use undertone::{
    cover_stream, run_scenario, CodecId, EncodedStream, Error, Format, HeaderDesign, LiveOptions,
    Result, ScenarioConfig,
};

use crate::settings::Settings;

/// Socket read timeout; it also paces the live send/receive loops.
const RECV_PATIENCE: Duration = Duration::from_millis(2);

/// Mixed into `--seed` when a cover voice has to be synthesized.
const SYNTH_VOICE_SEED: u64 = 0x5EED_C0DE;

/// Frames of synthesized cover voice a receiver keeps ready when no
/// `--input` WAV is given (about eight minutes of margin at 160-code
/// frames are not needed; this is ~48 s and bounds how long an unanswered
/// receiver waits).
const RECEIVER_SYNTH_FRAMES: usize = 2400;

// ---------------------------------------------------------------------------
// capacity

/// Prints what one packet and one second can carry under the settings.
pub fn capacity(settings: &Settings) -> Result<()> {
    let session = settings.session()?;
    let gross = session.gross_capacity_bits();
    let reserve = session.appendix_bits();
    let header_bits = match settings.header {
        HeaderDesign::Static => DATA_BITS,
        HeaderDesign::Dynamic => DAT_TAG_BITS,
    };
    // Fails (exit 3) when a frame cannot hold a header plus one payload byte.
    let seg_bytes = session.segment_bytes()?;
    let max_bytes = session.max_request_bytes()?;
    let net = session.content_capacity_bits() - header_bits;
    let pps = session.codec.nominal_rate() as f64 / session.frame_codes as f64;

    println!(
        "codec: {} ({} bits/code at {} Hz)",
        session.codec,
        session.codec.bits_per_code(),
        session.codec.nominal_rate()
    );
    let per_code = session.alg.bits_per_code();
    println!(
        "algorithm: {} ({} hidden {}/code)",
        session.alg,
        per_code,
        if per_code == 1 { "bit" } else { "bits" }
    );
    println!(
        "header design: {}   placement: {} (offset {})",
        session.header_design, session.placement.mode, session.placement.initial_offset_codes
    );
    println!(
        "frame: {} codes -> {} packets/s",
        session.frame_codes,
        fmt_rate(pps)
    );
    println!("gross capacity: {gross} bits/packet");
    if reserve > 0 {
        println!("chained-offset reserve: {reserve} bits/packet");
    }
    println!("data header cost: {header_bits} bits/packet");
    println!("net payload: {net} bits/packet ({seg_bytes} bytes/segment)");
    println!("net throughput: {} bits/s", fmt_rate(net as f64 * pps));
    println!("max single-request payload: {max_bytes} bytes");
    Ok(())
}

/// Rates print without a trailing ".0" so round numbers read naturally.
fn fmt_rate(x: f64) -> String {
    if (x - x.round()).abs() < 1e-9 {
        format!("{x:.0}")
    } else {
        format!("{x:.2}")
    }
}

// ---------------------------------------------------------------------------
// simulate

/// Runs one scripted scenario for every header design x codec x algorithm
/// combination and emits one quality row per run.
pub fn simulate(settings: &Settings, scenario: u8) -> Result<()> {
    let input = settings
        .input
        .as_ref()
        .ok_or_else(|| Error::Argument("simulate needs --input (a cover WAV)".into()))?;
    let clip = read_wav_arg(input)?;

    let mut rows = vec![format!("design,{CSV_HEADER}")];
    for design in [HeaderDesign::Static, HeaderDesign::Dynamic] {
        for codec in [CodecId::Ulaw, CodecId::Dvi] {
            let cover = encode_clip(&clip, codec)?;
            for alg in ALL_ALGORITHMS {
                rows.push(simulate_row(settings, scenario, design, codec, &cover, alg)?);
            }
        }
    }

    let csv = rows.join("\n") + "\n";
    print!("{csv}");
    if let Some(path) = &settings.report {
        write_text(path, &csv)?;
    }
    Ok(())
}

/// One sweep entry: a metrics row, or a skip marker when the combination
/// cannot run (details go to stderr, the CSV stays deterministic).
fn simulate_row(
    settings: &Settings,
    scenario: u8,
    design: HeaderDesign,
    codec: CodecId,
    cover: &EncodedStream,
    alg: undertone::stego::EmbedAlgorithm,
) -> Result<String> {
    let mut each = settings.clone();
    each.codec = codec;
    each.alg = alg;
    each.header = design;
    let session = match each.session() {
        Ok(session) => session,
        Err(err) => {
            eprintln!("warning: skipping {design}/{codec}/{alg}: {err}");
            return Ok(format!("{design},{codec},{alg},skipped: unsupported combination,,,,"));
        }
    };

    let mut cfg = ScenarioConfig::new(session);
    cfg.loss_probability = each.loss;
    cfg.reorder_probability = each.reorder;
    cfg.fault_seed = each.seed.wrapping_add(1);
    cfg.payload_seed = each.seed;
    let report = match run_scenario(scenario, &cfg, cover) {
        Ok(report) => report,
        Err(err @ (Error::Capacity { .. } | Error::Unsupported(_))) => {
            eprintln!("warning: skipping {design}/{codec}/{alg}: {err}");
            return Ok(format!("{design},{codec},{alg},skipped: frame or cover too small,,,,"));
        }
        Err(other) => return Err(other),
    };

    // Quality of the payload-carrying direction: the call as transmitted
    // against the cover span it consumed.
    let forward_hidden: usize = report
        .records
        .iter()
        .filter(|r| r.direction == Direction::Forward)
        .map(|r| r.hidden_bits)
        .sum();
    let mut row = build_report(alg, design, &report.forward_cover, &report.forward_sent, forward_hidden)?;
    if let Some(tool) = &settings.pesq_tool {
        let tag = format!("{design}-{codec}-{alg}");
        row.mos_lqo = Some(score_streams(tool, &report.forward_cover, &report.forward_sent, &tag)?);
    }
    Ok(format!("{design},{}", row.csv_row()))
}

/// Scores two code streams with the external tool, via temporary WAVs.
fn score_streams(
    tool: &Path,
    cover: &EncodedStream,
    marked: &EncodedStream,
    tag: &str,
) -> Result<f64> {
    let dir = std::env::temp_dir();
    let pid = std::process::id();
    let ref_path = dir.join(format!("undertone-{pid}-{tag}-ref.wav"));
    let deg_path = dir.join(format!("undertone-{pid}-{tag}-deg.wav"));
    write_wav(&cover.decode(), &ref_path)?;
    write_wav(&marked.decode(), &deg_path)?;
    let score = score_with_tool(tool, &ref_path, &deg_path);
    let _ = std::fs::remove_file(&ref_path);
    let _ = std::fs::remove_file(&deg_path);
    score
}

// ---------------------------------------------------------------------------
// send

/// Transmits a payload file covertly inside a voice call to `--peer`.
pub fn send(settings: &Settings, listen: Option<&str>) -> Result<()> {
    let payload_path = settings
        .payload
        .as_ref()
        .ok_or_else(|| Error::Argument("send needs --payload (the file to transmit)".into()))?;
    let peer = settings
        .peer
        .as_deref()
        .ok_or_else(|| Error::Argument("send needs --peer (the receiver's address)".into()))?;
    let payload = std::fs::read(payload_path)
        .map_err(|e| Error::Argument(format!("cannot read {}: {e}", payload_path.display())))?;
    let session = settings.session()?;
    session.validate_for_transfer()?;

    // Pre-flight: one request must be able to carry the whole payload.
    let max_bytes = session.max_request_bytes()?;
    if payload.len() > max_bytes {
        eprintln!(
            "payload is {} bytes but one request carries at most {} bytes ({} bytes over)",
            payload.len(),
            max_bytes,
            payload.len() - max_bytes
        );
        return Err(Error::Capacity {
            needed_bits: payload.len() * 8,
            available_bits: max_bytes * 8,
        });
    }

    let segments = payload.len().div_ceil(session.segment_bytes()?).max(1);
    let cover = sender_cover(settings, &session, segments)?;
    let frames = cover.len() / session.frame_codes;
    // The burst itself plus the opening exchange; covers shorter than this
    // cannot finish even a lossless run.
    let min_frames = segments + 6;
    if frames < min_frames {
        eprintln!(
            "cover provides {frames} frames of {} codes; {segments} data segments need at least \
             {min_frames} frames",
            session.frame_codes
        );
        return Err(Error::Capacity {
            needed_bits: min_frames * session.frame_codes * session.codec.bits_per_code(),
            available_bits: cover.total_bits(),
        });
    }

    let faults = LossModel::new(settings.loss, settings.reorder, settings.seed)?;
    let mut channel =
        UdpChannel::bind(listen.unwrap_or("0.0.0.0:0"), peer, faults, RECV_PATIENCE)?;
    println!(
        "calling {peer} from {}: {} payload bytes in {segments} segments, {frames} cover frames",
        channel.local_addr()?,
        payload.len()
    );

    let opts = LiveOptions {
        max_packets: frames.saturating_sub(1).min(LiveOptions::default().max_packets),
        ..LiveOptions::default()
    };
    let started = Instant::now();
    let outcome = match undertone::send_payload(
        &mut channel,
        session,
        &cover,
        &payload,
        Format::Binary,
        &opts,
    ) {
        Ok(outcome) => outcome,
        // Both shapes of a dead call: the engine gave up re-bursting, or the
        // packet budget ran out first.
        Err(Error::Protocol(msg)) if msg.contains("not acknowledged") || msg.contains("gave up") => {
            eprintln!("no acknowledgment from {peer}; is `undertone recv` listening there?");
            return Err(Error::Protocol(msg));
        }
        Err(other) => return Err(other),
    };

    for note in &outcome.notices {
        eprintln!("note: {note}");
    }
    let stats = outcome.stats;
    println!(
        "delivered {} bytes in {:.1}s",
        payload.len(),
        started.elapsed().as_secs_f64()
    );
    println!(
        "packets sent: {} ({} protocol, {} filler)",
        stats.packets_sent, stats.protocol_sent, stats.dummies_sent
    );
    println!("hidden bits sent: {}", stats.hidden_bits_sent);
    println!("acknowledgments received: {}", stats.acks_received);
    println!("retransmission rounds: {}", stats.resend_events);
    Ok(())
}

/// The sender's cover voice: the `--input` WAV, or a synthesized call sized
/// for the burst plus generous retransmission headroom.
fn sender_cover(
    settings: &Settings,
    session: &SessionConfig,
    segments: usize,
) -> Result<EncodedStream> {
    if let Some(path) = &settings.input {
        let clip = read_wav_arg(path)?;
        return encode_clip(&clip, session.codec);
    }
    let frames = 4 * segments + 800;
    Ok(cover_stream(
        session.codec,
        frames * session.frame_codes,
        settings.seed ^ SYNTH_VOICE_SEED,
    ))
}

// ---------------------------------------------------------------------------
// recv

/// Answers a call on `--listen`, extracts the payload, and writes it plus
/// the reassembled call audio.
pub fn recv(settings: &Settings, listen: &str, wav_out: Option<&Path>) -> Result<()> {
    let peer = settings
        .peer
        .as_deref()
        .ok_or_else(|| Error::Argument("recv needs --peer (the sender's address)".into()))?;
    let payload_out = settings
        .payload
        .clone()
        .unwrap_or_else(|| PathBuf::from("payload.out"));
    let wav_out = wav_out.unwrap_or_else(|| Path::new("received.wav"));
    let session = settings.session()?;
    session.validate_for_transfer()?;

    // Bind before the (possibly slow) cover synthesis so early packets from
    // an eager sender queue in the socket instead of vanishing.
    let faults = LossModel::new(settings.loss, settings.reorder, settings.seed.wrapping_add(1))?;
    let mut channel = UdpChannel::bind(listen, peer, faults, RECV_PATIENCE)?;

    let cover = match &settings.input {
        Some(path) => {
            let clip = read_wav_arg(path)?;
            encode_clip(&clip, session.codec)?
        }
        None => cover_stream(
            session.codec,
            RECEIVER_SYNTH_FRAMES * session.frame_codes,
            (settings.seed ^ SYNTH_VOICE_SEED).wrapping_add(1),
        ),
    };
    let frames = cover.len() / session.frame_codes;
    println!("answering on {listen}, replying to {peer} ({frames} cover frames ready)");

    let opts = LiveOptions {
        max_packets: frames.saturating_sub(1).min(LiveOptions::default().max_packets),
        ..LiveOptions::default()
    };
    let got = match undertone::receive_payload(&mut channel, session, &cover, &opts) {
        Ok(got) => got,
        Err(Error::Protocol(msg)) if msg.contains("no complete transfer") => {
            eprintln!("nothing usable arrived from {peer}; check both addresses and that \
                       `undertone send` is running");
            return Err(Error::Protocol(msg));
        }
        Err(other) => return Err(other),
    };

    for note in &got.notices {
        eprintln!("note: {note}");
    }
    std::fs::write(&payload_out, &got.payload)
        .map_err(|e| Error::Argument(format!("cannot write {}: {e}", payload_out.display())))?;
    let call = got.stream.decode();
    write_wav(&call, wav_out)
        .map_err(|e| Error::Argument(format!("cannot write {}: {e}", wav_out.display())))?;

    println!(
        "received {} payload bytes ({})",
        got.payload.len(),
        match got.fmt {
            Format::Text => "text",
            Format::Binary => "binary",
        }
    );
    println!(
        "packets heard: {} ({} lost on the way)",
        got.packets_received, got.lost_packets
    );
    println!("resend signals sent: {}", got.stats.resend_signals_sent);
    println!("payload written to {}", payload_out.display());
    println!(
        "call audio written to {} ({:.1}s)",
        wav_out.display(),
        call.duration_secs()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

/// Compares a cover/stego WAV pair sample-by-sample and emits one metrics
/// row. The codec and algorithm settings only label the row; the comparison
/// itself happens on the raw samples.
pub fn analyze(settings: &Settings, stego_path: &Path, hidden_bits: usize) -> Result<()> {
    let cover_path = settings
        .input
        .as_ref()
        .ok_or_else(|| Error::Argument("analyze needs --input (the unmodified cover WAV)".into()))?;
    let cover = read_wav_arg(cover_path)?;
    let stego = read_wav_arg(stego_path)?;
    if cover.sample_rate != stego.sample_rate {
        return Err(Error::Argument(format!(
            "sample rates differ: {} Hz vs {} Hz",
            cover.sample_rate, stego.sample_rate
        )));
    }
    if cover.samples.len() != stego.samples.len() {
        return Err(Error::Argument(format!(
            "clip lengths differ: {} vs {} samples",
            cover.samples.len(),
            stego.samples.len()
        )));
    }

    let carrier_bits = cover.samples.len() * settings.codec.bits_per_code();
    let mut row = MetricsReport {
        codec: settings.codec,
        alg: settings.alg,
        header_design: settings.header,
        hidden_fraction: hidden_bits as f64 / carrier_bits as f64,
        mse: pcm_mse(&cover, &stego)?,
        snr_db: pcm_snr_db(&cover, &stego)?,
        psnr_db: pcm_psnr_db(&cover, &stego)?,
        mos_lqo: None,
    };
    if let Some(tool) = &settings.pesq_tool {
        row.mos_lqo = Some(score_with_tool(tool, cover_path, stego_path)?);
    }

    let csv = format!("design,{CSV_HEADER}\n{},{}\n", settings.header, row.csv_row());
    print!("{csv}");
    if let Some(path) = &settings.report {
        write_text(path, &csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shared helpers

/// Reads a WAV whose absence is a configuration error, not a transport one.
fn read_wav_arg(path: &Path) -> Result<PcmClip> {
    read_wav(path).map_err(|e| match e {
        Error::Io(io) => Error::Argument(format!("cannot read {}: {io}", path.display())),
        other => other,
    })
}

/// Encodes a clip for `codec`, resampling first when the rates differ.
fn encode_clip(clip: &PcmClip, codec: CodecId) -> Result<EncodedStream> {
    if clip.sample_rate == codec.nominal_rate() {
        return Ok(encode_with(codec, clip));
    }
    let resampled = resample_nearest(clip, codec.nominal_rate())?;
    Ok(encode_with(codec, &resampled))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)
        .map_err(|e| Error::Argument(format!("cannot write {}: {e}", path.display())))
}
