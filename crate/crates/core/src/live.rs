//! Endpoint drivers for covert transfers over a packet channel.
//!
//! [`send_payload`] and [`receive_payload`] pair a session engine with any
//! [`PacketChannel`] — loopback UDP or the in-memory link — and run one
//! request to completion. Each loop iteration drains arrived packets into
//! the engine and emits exactly one packet (carrying a protocol message or
//! filler), so both endpoints emit at comparable rates and the engine's
//! tick-based timers keep their meaning.
//!
//! The receiver additionally keeps every RTP packet it hears so the voice
//! call itself can be reassembled — lost frames silence-filled — alongside
//! the extracted payload.

use std::thread;
use std::time::Duration;

use crate::bits::BitString;
use crate::codec::EncodedStream;
use crate::engine::{EngineAction, EngineStats, Outgoing, Role, SeqUnwrap, SessionConfig, SessionEngine};
use crate::error::{Error, Result};
use crate::header::Format;
use crate::stego::{embed_bits, extract_bits};
use crate::transport::{
    depacketize, pack_codes, payload_type_for, unpack_codes, PacketChannel, RtpPacket,
};

/// Pacing and give-up knobs for a live endpoint.
#[derive(Clone, Copy, Debug)]
pub struct LiveOptions {
    /// Sleep after each loop iteration. Zero is fine when the channel's own
    /// receive patience provides pacing (UDP does; see
    /// [`crate::transport::UdpChannel::bind`]).
    pub pace: Duration,
    /// Consecutive empty receive polls, after the payload has been
    /// delivered, before the receiver declares the call over. UDP has no
    /// close signal, so silence is the only end-of-call marker.
    pub linger_polls: usize,
    /// Hard cap on packets this endpoint sends; reaching it means the
    /// conversation stalled and the run fails rather than looping forever.
    pub max_packets: usize,
}

impl Default for LiveOptions {
    fn default() -> Self {
        LiveOptions {
            pace: Duration::from_micros(200),
            linger_polls: 25,
            max_packets: 20_000,
        }
    }
}

/// What the sending endpoint saw.
#[derive(Clone, Debug)]
pub struct SendOutcome {
    pub stats: EngineStats,
    /// Non-fatal oddities the engine reported (ignored windows, stale
    /// messages).
    pub notices: Vec<String>,
}

/// What the receiving endpoint assembled.
#[derive(Clone, Debug)]
pub struct ReceiveOutcome {
    pub payload: Vec<u8>,
    pub fmt: Format,
    pub stats: EngineStats,
    pub packets_received: usize,
    /// Sequence gaps in the incoming stream (packets that never arrived).
    pub lost_packets: usize,
    /// The incoming voice stream, reassembled in sequence order with gaps
    /// silence-filled. Decode it to recover the call audio.
    pub stream: EncodedStream,
    pub notices: Vec<String>,
}

/// Serves cover frames and turns outgoing hidden bits into RTP packets.
struct FrameFeeder<'a> {
    cover: &'a EncodedStream,
    pos: usize,
    timestamp: u32,
    ssrc: u32,
}

impl<'a> FrameFeeder<'a> {
    fn new(cover: &'a EncodedStream, role: Role) -> Self {
        FrameFeeder { cover, pos: 0, timestamp: 0, ssrc: 0x5CE0 + role as u32 }
    }

    fn frames_left(&self, cfg: &SessionConfig) -> usize {
        (self.cover.len() - self.pos) / cfg.frame_codes
    }

    fn send<C: PacketChannel>(
        &mut self,
        channel: &mut C,
        cfg: &SessionConfig,
        out: &Outgoing,
    ) -> Result<()> {
        let end = self.pos + cfg.frame_codes;
        if end > self.cover.len() {
            return Err(Error::Capacity {
                needed_bits: cfg.frame_codes * self.cover.bits_per_code(),
                available_bits: (self.cover.len() - self.pos) * self.cover.bits_per_code(),
            });
        }
        let frame = EncodedStream::new(self.cover.codec, self.cover.codes[self.pos..end].to_vec())?;
        self.pos = end;
        let stego_frame = embed_bits(&frame, cfg.alg, out.offset_codes, &out.bits)?;
        let packet = RtpPacket {
            payload_type: payload_type_for(self.cover.codec),
            sequence: out.ordinal as u16,
            timestamp: self.timestamp,
            ssrc: self.ssrc,
            payload: pack_codes(self.cover.codec, &stego_frame.codes),
        };
        self.timestamp = self.timestamp.wrapping_add(cfg.frame_codes as u32);
        channel.send(&packet)
    }
}

/// Recovers one packet's ordinal and hidden-bit window.
fn open_window(
    cfg: &SessionConfig,
    packet: &RtpPacket,
    unwrap: &mut SeqUnwrap,
) -> Result<(u64, BitString)> {
    let codes = unpack_codes(cfg.codec, &packet.payload);
    let frame = EncodedStream::new(cfg.codec, codes)?;
    let ordinal = unwrap.ordinal(packet.sequence);
    let offset = cfg.offset_for(ordinal);
    let count = frame.len().saturating_sub(offset) * cfg.alg.bits_per_code();
    let window = extract_bits(&frame, cfg.alg, offset, count)?;
    Ok((ordinal, window))
}

fn check_cover(cfg: &SessionConfig, cover: &EncodedStream) -> Result<()> {
    if cover.codec != cfg.codec {
        return Err(Error::Unsupported(format!(
            "cover is {} but the session expects {}",
            cover.codec.name(),
            cfg.codec.name()
        )));
    }
    Ok(())
}

/// Sends one payload over `channel`, drawing carrier frames from `cover`,
/// and returns once the transfer is fully acknowledged. Fails if the engine
/// gives up, the cover runs out of frames, or the packet budget is spent.
pub fn send_payload<C: PacketChannel>(
    channel: &mut C,
    cfg: SessionConfig,
    cover: &EncodedStream,
    payload: &[u8],
    fmt: Format,
    opts: &LiveOptions,
) -> Result<SendOutcome> {
    check_cover(&cfg, cover)?;
    let mut engine = SessionEngine::new(cfg, Role::Sender)?;
    engine.start_request(payload, fmt)?;

    let mut feeder = FrameFeeder::new(cover, Role::Sender);
    let mut unwrap = SeqUnwrap::default();
    let mut notices = Vec::new();
    let mut abort: Option<String> = None;

    loop {
        let out = engine.next_outgoing()?;
        feeder.send(channel, &cfg, &out)?;

        while let Some(packet) = channel.recv()? {
            let (ordinal, window) = open_window(&cfg, &packet, &mut unwrap)?;
            for action in engine.handle_incoming(ordinal, &window) {
                match action {
                    EngineAction::Abort(reason) => abort = Some(reason),
                    EngineAction::Notify(note) => notices.push(note),
                    EngineAction::Deliver { .. } => {}
                }
            }
        }
        for action in engine.drain_actions() {
            match action {
                EngineAction::Abort(reason) => abort = Some(reason),
                EngineAction::Notify(note) => notices.push(note),
                EngineAction::Deliver { .. } => {}
            }
        }

        if engine.is_done() {
            return Ok(SendOutcome { stats: engine.stats().clone(), notices });
        }
        if let Some(reason) = abort {
            return Err(Error::Protocol(reason));
        }
        if engine.is_failed() {
            return Err(Error::Protocol("request aborted".into()));
        }
        if engine.stats().packets_sent >= opts.max_packets {
            return Err(Error::Protocol(format!(
                "transfer not acknowledged within {} packets",
                opts.max_packets
            )));
        }
        if !opts.pace.is_zero() {
            thread::sleep(opts.pace);
        }
    }
}

/// Listens on `channel` until one payload arrives and the call goes quiet,
/// answering with acknowledgments (and filler) drawn from `cover`. Returns
/// the payload plus the reassembled incoming voice stream.
pub fn receive_payload<C: PacketChannel>(
    channel: &mut C,
    cfg: SessionConfig,
    cover: &EncodedStream,
    opts: &LiveOptions,
) -> Result<ReceiveOutcome> {
    check_cover(&cfg, cover)?;
    let mut engine = SessionEngine::new(cfg, Role::Receiver)?;
    let mut feeder = FrameFeeder::new(cover, Role::Receiver);
    let mut unwrap = SeqUnwrap::default();
    let mut notices = Vec::new();
    let mut received: Vec<RtpPacket> = Vec::new();
    let mut delivered: Option<(Vec<u8>, Format)> = None;
    let mut quiet_polls = 0usize;

    loop {
        let mut heard_any = false;
        while let Some(packet) = channel.recv()? {
            heard_any = true;
            let (ordinal, window) = open_window(&cfg, &packet, &mut unwrap)?;
            received.push(packet);
            for action in engine.handle_incoming(ordinal, &window) {
                match action {
                    EngineAction::Deliver { payload, fmt } => delivered = Some((payload, fmt)),
                    EngineAction::Notify(note) => notices.push(note),
                    EngineAction::Abort(reason) => return Err(Error::Protocol(reason)),
                }
            }
        }
        for action in engine.drain_actions() {
            match action {
                EngineAction::Deliver { payload, fmt } => delivered = Some((payload, fmt)),
                EngineAction::Notify(note) => notices.push(note),
                EngineAction::Abort(reason) => return Err(Error::Protocol(reason)),
            }
        }

        quiet_polls = if heard_any { 0 } else { quiet_polls + 1 };
        if delivered.is_some() {
            // The payload is in hand; stay on the line to re-acknowledge
            // status queries until the talker goes silent (or the cover
            // runs dry — nothing left worth saying then anyway).
            if quiet_polls >= opts.linger_polls || feeder.frames_left(&cfg) == 0 {
                break;
            }
        }
        if engine.stats().packets_sent >= opts.max_packets {
            return Err(Error::Protocol(format!(
                "no complete transfer within {} packets",
                opts.max_packets
            )));
        }

        let out = engine.next_outgoing()?;
        feeder.send(channel, &cfg, &out)?;
        if !opts.pace.is_zero() {
            thread::sleep(opts.pace);
        }
    }

    let (payload, fmt) = delivered.expect("loop exits only after delivery");
    let (stream, gaps) = depacketize(&received)?;
    Ok(ReceiveOutcome {
        payload,
        fmt,
        stats: engine.stats().clone(),
        packets_received: received.len(),
        lost_packets: gaps.lost_packets(),
        stream,
        notices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecId;
    use crate::header::HeaderDesign;
    use crate::rng::SplitMix64;
    use crate::stego::{EmbedAlgorithm, Placement, PlacementMode};
    use crate::synth::cover_stream;
    use crate::transport::{LossModel, UdpChannel};

    fn udp_pair(patience: Duration) -> (UdpChannel, UdpChannel) {
        let mut a = UdpChannel::bind("127.0.0.1:0", "127.0.0.1:9", LossModel::lossless(), patience)
            .unwrap();
        let b = UdpChannel::bind(
            "127.0.0.1:0",
            a.local_addr().unwrap(),
            LossModel::lossless(),
            patience,
        )
        .unwrap();
        a.set_peer(b.local_addr().unwrap()).unwrap();
        (a, b)
    }

    fn seeded_payload(len: usize, seed: u64) -> Vec<u8> {
        let mut rng = SplitMix64::new(seed);
        rng.next_bytes(len)
    }

    #[test]
    fn loopback_udp_transfer_is_byte_identical() {
        let cfg = SessionConfig::baseline();
        let payload = seeded_payload(300, 7);
        let (mut tx_chan, mut rx_chan) = udp_pair(Duration::from_millis(1));
        let sender_cover = cover_stream(CodecId::Ulaw, 600 * cfg.frame_codes, 11);
        let receiver_cover = cover_stream(CodecId::Ulaw, 600 * cfg.frame_codes, 12);

        let rx_opts = LiveOptions { max_packets: 2_000, ..LiveOptions::default() };
        let rx = thread::spawn(move || {
            receive_payload(&mut rx_chan, cfg, &receiver_cover, &rx_opts)
        });
        let sent = send_payload(
            &mut tx_chan,
            cfg,
            &sender_cover,
            &payload,
            Format::Binary,
            &LiveOptions { max_packets: 2_000, ..LiveOptions::default() },
        )
        .expect("send side");
        let got = rx.join().expect("receiver thread").expect("receive side");

        assert_eq!(got.payload, payload);
        assert_eq!(got.fmt, Format::Binary);
        assert_eq!(got.stats.deliveries, 1);
        assert!(sent.stats.acks_received >= 1);
        // Loopback loses nothing, so the call reassembles gap-free and in
        // frame-sized units.
        assert_eq!(got.lost_packets, 0);
        assert_eq!(got.stream.len() % cfg.frame_codes, 0);
        assert!(got.stream.decode().duration_secs() > 0.0);
    }

    #[test]
    fn loopback_udp_chunked_chained_variant() {
        let cfg = SessionConfig {
            header_design: HeaderDesign::Dynamic,
            alg: EmbedAlgorithm::Lsb2,
            placement: Placement { mode: PlacementMode::Chained, initial_offset_codes: 0 },
            ack_every_n: 3,
            seed: 99,
            ..SessionConfig::baseline()
        };
        let payload = seeded_payload(200, 8);
        let (mut tx_chan, mut rx_chan) = udp_pair(Duration::from_millis(1));
        let sender_cover = cover_stream(CodecId::Ulaw, 600 * cfg.frame_codes, 13);
        let receiver_cover = cover_stream(CodecId::Ulaw, 600 * cfg.frame_codes, 14);

        let rx_opts = LiveOptions { max_packets: 2_000, ..LiveOptions::default() };
        let rx = thread::spawn(move || {
            receive_payload(&mut rx_chan, cfg, &receiver_cover, &rx_opts)
        });
        send_payload(
            &mut tx_chan,
            cfg,
            &sender_cover,
            &payload,
            Format::Text,
            &LiveOptions { max_packets: 2_000, ..LiveOptions::default() },
        )
        .expect("send side");
        let got = rx.join().expect("receiver thread").expect("receive side");

        assert_eq!(got.payload, payload);
        assert_eq!(got.fmt, Format::Text);
    }

    #[test]
    fn receiver_gives_up_when_nobody_calls() {
        let (mut chan, _other) = udp_pair(Duration::from_millis(1));
        let cfg = SessionConfig::baseline();
        let cover = cover_stream(CodecId::Ulaw, 80 * cfg.frame_codes, 15);
        let opts = LiveOptions { max_packets: 40, ..LiveOptions::default() };
        match receive_payload(&mut chan, cfg, &cover, &opts) {
            Err(Error::Protocol(msg)) => assert!(msg.contains("40 packets"), "{msg}"),
            other => panic!("expected a protocol failure, got {other:?}"),
        }
    }

    #[test]
    fn sender_cover_exhaustion_is_a_capacity_error() {
        use crate::transport::memory_link;
        let cfg = SessionConfig::baseline();
        let (mut chan, _peer) = memory_link(LossModel::lossless(), LossModel::lossless());
        // Two frames of cover cannot carry a three-segment burst.
        let cover = cover_stream(CodecId::Ulaw, 2 * cfg.frame_codes, 16);
        let payload = seeded_payload(40, 9);
        let opts = LiveOptions { pace: Duration::ZERO, ..LiveOptions::default() };
        match send_payload(&mut chan, cfg, &cover, &payload, Format::Binary, &opts) {
            Err(Error::Capacity { .. }) => {}
            other => panic!("expected cover exhaustion, got {other:?}"),
        }
    }

    #[test]
    fn mismatched_cover_codec_is_rejected() {
        let cfg = SessionConfig::baseline(); // expects 8-bit companded codes
        let cover = cover_stream(CodecId::Dvi, 40 * cfg.frame_codes, 17);
        let (mut chan, _peer) =
            crate::transport::memory_link(LossModel::lossless(), LossModel::lossless());
        let err = send_payload(
            &mut chan,
            cfg,
            &cover,
            &[1, 2, 3],
            Format::Binary,
            &LiveOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Unsupported(_)), "{err:?}");
    }
}
