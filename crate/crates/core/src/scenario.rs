//! Scripted end-to-end conversations over the simulated channel.
//!
//! Three traffic patterns exercise the whole stack — engine, embedding,
//! packetization, fault model — and produce a [`TranscriptReport`]:
//!
//! 1. **Idle cover traffic**: every packet a filler message (16 hidden bits
//!    per packet with fixed-layout headers, 12 with chunked ones).
//! 2. **Small transfers**: a loop of filler, then a request carrying three
//!    60-byte data segments, answered by a single acknowledgment.
//! 3. **Bulk transfer**: one request carrying as many data segments as the
//!    design allows, acknowledged on the configured cadence.
//!
//! Both directions embed into frames drawn from the same cover stream; the
//! report records every packet (direction, content summary, embed offset,
//! hidden bits) plus the aggregate counters.

use std::fmt;

use crate::codec::EncodedStream;
use crate::engine::{
    EngineAction, Outgoing, PacketKind, Role, SeqUnwrap, SessionConfig, SessionEngine,
};
use crate::error::{Error, Result};
use crate::header::{Format, HeaderDesign};
use crate::rng::SplitMix64;
use crate::stego::{embed_bits, extract_bits};
use crate::transport::{
    memory_link, pack_codes, payload_type_for, unpack_codes, LossModel, MemoryChannel,
    PacketChannel, RtpPacket,
};

/// Knobs for a scripted run, on top of the shared session parameters.
#[derive(Clone, Copy, Debug)]
pub struct ScenarioConfig {
    pub session: SessionConfig,
    /// Independent drop probability per packet, each direction.
    pub loss_probability: f64,
    /// Adjacent-swap probability per packet, each direction.
    pub reorder_probability: f64,
    pub fault_seed: u64,
    /// Packets per direction in the idle scenario.
    pub dummy_packets: usize,
    /// Request repetitions in the small-transfer scenario.
    pub request_loops: usize,
    /// Filler packets between small-transfer loops.
    pub idle_gap: usize,
    /// Seed for the deterministic payload bytes.
    pub payload_seed: u64,
}

impl ScenarioConfig {
    pub fn new(session: SessionConfig) -> Self {
        ScenarioConfig {
            session,
            loss_probability: 0.0,
            reorder_probability: 0.0,
            fault_seed: 1,
            dummy_packets: 50,
            request_loops: 3,
            idle_gap: 8,
            payload_seed: 41,
        }
    }
}

/// Which way a packet travelled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Back,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "->",
            Direction::Back => "<-",
        })
    }
}

/// One sent packet, as the transcript records it.
#[derive(Clone, Debug)]
pub struct PacketRecord {
    pub direction: Direction,
    pub kind: PacketKind,
    pub offset_codes: usize,
    pub hidden_bits: usize,
}

impl fmt::Display for PacketRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<6} offset={:<2} bits={}",
            self.direction, self.kind, self.offset_codes, self.hidden_bits
        )
    }
}

/// Everything a scripted run produced.
#[derive(Clone, Debug)]
pub struct TranscriptReport {
    pub scenario: u8,
    /// Packets sent, both directions combined.
    pub packets_sent: usize,
    pub hidden_bits_total: usize,
    /// Carrier bits spanned by all sent packets.
    pub carrier_bits_total: usize,
    /// hidden_bits_total / carrier_bits_total.
    pub hidden_fraction: f64,
    /// Sender-side retransmission rounds (re-bursts, repairs, queries).
    pub retransmissions: usize,
    /// Receiver-side RESEND/ask packets.
    pub resend_signals: usize,
    /// Receiver-side response packets (acks included).
    pub responses: usize,
    pub deliveries: usize,
    pub delivered: Vec<(Vec<u8>, Format)>,
    pub records: Vec<PacketRecord>,
    /// The sender-direction call as it left the wire, protocol bits embedded.
    pub forward_sent: EncodedStream,
    /// The unmodified cover span the forward call consumed.
    pub forward_cover: EncodedStream,
}

impl TranscriptReport {
    pub fn delivered_bytes(&self) -> usize {
        self.delivered.iter().map(|(p, _)| p.len()).sum()
    }

    /// The line-oriented transcript: a summary header, then one line per
    /// packet.
    pub fn to_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!(
                "scenario {} packets={} hidden_bits={} hidden_fraction={:.3}% \
                 retransmissions={} deliveries={}",
                self.scenario,
                self.packets_sent,
                self.hidden_bits_total,
                self.hidden_fraction * 100.0,
                self.retransmissions,
                self.deliveries
            ),
        ];
        lines.extend(self.records.iter().map(|r| r.to_string()));
        lines
    }
}

impl fmt::Display for TranscriptReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for line in self.to_lines() {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Deterministic payload for a scenario's requests.
pub fn scenario_payload(id: u8, session: &SessionConfig, seed: u64) -> Result<Vec<u8>> {
    let bytes = match id {
        1 => 0,
        2 => SMALL_TRANSFER_BYTES,
        3 => session.max_request_bytes()?,
        other => {
            return Err(Error::Argument(format!(
                "unknown scenario {other}; expected 1, 2, or 3"
            )))
        }
    };
    let mut rng = SplitMix64::new(seed);
    Ok((0..bytes).map(|_| rng.next_u64() as u8).collect())
}

/// Small-transfer scenario: three segments of 60 bytes.
pub const SMALL_TRANSFER_SEGMENT_BYTES: u8 = 60;
pub const SMALL_TRANSFER_BYTES: usize = 3 * SMALL_TRANSFER_SEGMENT_BYTES as usize;

/// One endpoint's transport-facing state.
struct Endpoint {
    engine: SessionEngine,
    channel: MemoryChannel,
    unwrap: SeqUnwrap,
    cover_pos: usize,
    timestamp: u32,
    sent_codes: Vec<u8>,
}

impl Endpoint {
    /// Embeds one engine packet into the next cover frame and sends it.
    fn send_one(&mut self, cover: &EncodedStream, out: &Outgoing) -> Result<()> {
        let cfg = *self.engine.config();
        let end = self.cover_pos + cfg.frame_codes;
        if end > cover.len() {
            return Err(Error::Capacity {
                needed_bits: cfg.frame_codes * cover.bits_per_code(),
                available_bits: (cover.len() - self.cover_pos) * cover.bits_per_code(),
            });
        }
        let frame = EncodedStream::new(cover.codec, cover.codes[self.cover_pos..end].to_vec())?;
        self.cover_pos = end;
        let stego_frame = embed_bits(&frame, cfg.alg, out.offset_codes, &out.bits)?;
        let packet = RtpPacket {
            payload_type: payload_type_for(cover.codec),
            sequence: out.ordinal as u16,
            timestamp: self.timestamp,
            ssrc: 0x5CE0 + self.engine.role() as u32,
            payload: pack_codes(cover.codec, &stego_frame.codes),
        };
        self.timestamp = self.timestamp.wrapping_add(cfg.frame_codes as u32);
        self.channel.send(&packet)?;
        self.sent_codes.extend_from_slice(&stego_frame.codes);
        Ok(())
    }

    /// Drains arrived packets into the engine, collecting deliveries.
    fn pump_incoming(
        &mut self,
        codec: crate::codec::CodecId,
        delivered: &mut Vec<(Vec<u8>, Format)>,
    ) -> Result<()> {
        let cfg = *self.engine.config();
        while let Some(packet) = self.channel.recv()? {
            let codes = unpack_codes(codec, &packet.payload);
            let frame = EncodedStream::new(codec, codes)?;
            let ordinal = self.unwrap.ordinal(packet.sequence);
            let offset = cfg.offset_for(ordinal);
            let count = frame.len().saturating_sub(offset) * cfg.alg.bits_per_code();
            let window = extract_bits(&frame, cfg.alg, offset, count)?;
            for action in self.engine.handle_incoming(ordinal, &window) {
                if let EngineAction::Deliver { payload, fmt } = action {
                    delivered.push((payload, fmt));
                }
            }
        }
        Ok(())
    }
}

/// Runs one scripted scenario over the in-memory channel and reports the
/// transcript. The cover must supply one frame per packet per direction;
/// running out raises a capacity error.
pub fn run_scenario(
    id: u8,
    cfg: &ScenarioConfig,
    cover: &EncodedStream,
) -> Result<TranscriptReport> {
    let mut session = cfg.session;
    if id == 2 {
        // The small-transfer pattern fixes its shape: 60-byte segments and
        // exactly one acknowledgment per request.
        session.segment_limit = Some(SMALL_TRANSFER_SEGMENT_BYTES);
        session.ack_every_n = SMALL_TRANSFER_BYTES / SMALL_TRANSFER_SEGMENT_BYTES as usize + 1;
        let needed = biggest_packet_bits(&session);
        let cap = session.content_capacity_bits();
        if cap < needed {
            return Err(Error::Capacity { needed_bits: needed, available_bits: cap });
        }
    }
    if session.codec != cover.codec {
        return Err(Error::Unsupported(format!(
            "cover is {} but the session expects {}",
            cover.codec.name(),
            session.codec.name()
        )));
    }

    let fwd = LossModel::new(cfg.loss_probability, cfg.reorder_probability, cfg.fault_seed)?;
    let back = LossModel::new(
        cfg.loss_probability,
        cfg.reorder_probability,
        cfg.fault_seed.wrapping_add(1),
    )?;
    let (chan_s, chan_r) = memory_link(fwd, back);
    let mut sender = Endpoint {
        engine: SessionEngine::new(session, Role::Sender)?,
        channel: chan_s,
        unwrap: SeqUnwrap::default(),
        cover_pos: 0,
        timestamp: 0,
        sent_codes: Vec::new(),
    };
    let mut receiver = Endpoint {
        engine: SessionEngine::new(session, Role::Receiver)?,
        channel: chan_r,
        unwrap: SeqUnwrap::default(),
        cover_pos: 0,
        timestamp: 0,
        sent_codes: Vec::new(),
    };

    let mut report = TranscriptReport {
        scenario: id,
        packets_sent: 0,
        hidden_bits_total: 0,
        carrier_bits_total: 0,
        hidden_fraction: 0.0,
        retransmissions: 0,
        resend_signals: 0,
        responses: 0,
        deliveries: 0,
        delivered: Vec::new(),
        records: Vec::new(),
        forward_sent: EncodedStream::new(session.codec, Vec::new())?,
        forward_cover: EncodedStream::new(session.codec, Vec::new())?,
    };

    let tick = |sender: &mut Endpoint,
                    receiver: &mut Endpoint,
                    report: &mut TranscriptReport|
     -> Result<()> {
        let out_s = sender.engine.next_outgoing()?;
        let out_r = receiver.engine.next_outgoing()?;
        record(&mut *report, Direction::Forward, &out_s, &session);
        record(&mut *report, Direction::Back, &out_r, &session);
        sender.send_one(cover, &out_s)?;
        receiver.send_one(cover, &out_r)?;
        let mut none = Vec::new();
        receiver.pump_incoming(session.codec, &mut report.delivered)?;
        sender.pump_incoming(session.codec, &mut none)?;
        for (payload, _) in none {
            return Err(Error::Protocol(format!(
                "sender delivered {} bytes; it must never deliver",
                payload.len()
            )));
        }
        if sender.engine.is_failed() {
            return Err(Error::Protocol(
                "sender aborted: retransmission budget exhausted".into(),
            ));
        }
        Ok(())
    };

    match id {
        1 => {
            for _ in 0..cfg.dummy_packets {
                tick(&mut sender, &mut receiver, &mut report)?;
            }
        }
        2 | 3 => {
            let loops = if id == 2 { cfg.request_loops.max(1) } else { 1 };
            let payload = scenario_payload(id, &session, cfg.payload_seed)?;
            for round in 0..loops {
                if id == 2 {
                    for _ in 0..cfg.idle_gap {
                        tick(&mut sender, &mut receiver, &mut report)?;
                    }
                }
                sender.engine.start_request(&payload, Format::Binary)?;
                let budget = 400 + 60 * payload.len().div_ceil(1.max(session.segment_bytes()?));
                let mut spent = 0;
                while !sender.engine.is_done() {
                    tick(&mut sender, &mut receiver, &mut report)?;
                    spent += 1;
                    if spent > budget {
                        return Err(Error::Protocol(format!(
                            "transfer round {round} stalled after {budget} packets"
                        )));
                    }
                }
            }
            // A short tail lets straggling acknowledgments drain.
            for _ in 0..4 {
                tick(&mut sender, &mut receiver, &mut report)?;
            }
        }
        other => {
            return Err(Error::Argument(format!(
                "unknown scenario {other}; expected 1, 2, or 3"
            )))
        }
    }

    report.retransmissions = sender.engine.stats().resend_events;
    report.resend_signals = receiver.engine.stats().resend_signals_sent;
    report.responses = receiver.engine.stats().responses_sent;
    report.deliveries = report.delivered.len();
    report.forward_cover =
        EncodedStream::new(session.codec, cover.codes[..sender.cover_pos].to_vec())?;
    report.forward_sent = EncodedStream::new(session.codec, sender.sent_codes)?;
    if report.carrier_bits_total > 0 {
        report.hidden_fraction =
            report.hidden_bits_total as f64 / report.carrier_bits_total as f64;
    }
    Ok(report)
}

fn record(
    report: &mut TranscriptReport,
    direction: Direction,
    out: &Outgoing,
    session: &SessionConfig,
) {
    report.packets_sent += 1;
    report.hidden_bits_total += out.bits.len();
    report.carrier_bits_total += session.frame_codes * session.codec.bits_per_code();
    report.records.push(PacketRecord {
        direction,
        kind: out.kind,
        offset_codes: out.offset_codes,
        hidden_bits: out.bits.len(),
    });
}

/// Widest packet a transfer can emit under this configuration.
fn biggest_packet_bits(session: &SessionConfig) -> usize {
    let seg = session.segment_limit.map(|s| s as usize).unwrap_or(255);
    match session.header_design {
        HeaderDesign::Static => crate::header::DATA_BITS + 8 * seg,
        HeaderDesign::Dynamic => crate::chunks::DAT_TAG_BITS + 8 * seg,
    }
}
