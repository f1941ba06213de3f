//! RTP framing, channels, and deterministic fault injection.
//!
//! Code streams are framed into RTP packets (12-byte fixed header, no CSRC,
//! no extensions) and moved either through an in-memory queue or a real UDP
//! socket. The channel never corrupts payload bytes — it only drops whole
//! packets or swaps adjacent deliveries, both reproducibly from a seed.
//! Receivers substitute silence codes for lost frames so the reassembled
//! audio timeline keeps its length.

use std::collections::VecDeque;
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use crate::codec::{CodecId, EncodedStream};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Fixed RTP header size used throughout (no CSRC list, no extension).
pub const RTP_HEADER_BYTES: usize = 12;

/// RTP payload type for 8-bit μ-law audio.
pub const PT_ULAW: u8 = 0;
/// RTP payload type for 4-bit DVI ADPCM audio.
pub const PT_DVI: u8 = 5;

/// Payload type assigned to each carrier codec.
pub fn payload_type_for(codec: CodecId) -> u8 {
    match codec {
        CodecId::Ulaw => PT_ULAW,
        CodecId::Dvi => PT_DVI,
    }
}

/// Inverse of [`payload_type_for`].
pub fn codec_for_payload_type(pt: u8) -> Result<CodecId> {
    match pt {
        PT_ULAW => Ok(CodecId::Ulaw),
        PT_DVI => Ok(CodecId::Dvi),
        other => Err(Error::Format(format!("unsupported RTP payload type {other}"))),
    }
}

/// One RTP packet: fixed 12-byte header plus the audio payload bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RtpPacket {
    pub payload_type: u8,
    pub sequence: u16,
    pub timestamp: u32,
    pub ssrc: u32,
    pub payload: Vec<u8>,
}

impl RtpPacket {
    /// Serializes header (version 2, no padding/extension/CSRC/marker) and
    /// payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RTP_HEADER_BYTES + self.payload.len());
        out.push(0x80); // V=2, P=0, X=0, CC=0
        out.push(self.payload_type & 0x7F); // M=0
        out.extend_from_slice(&self.sequence.to_be_bytes());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.ssrc.to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses a datagram produced by [`RtpPacket::to_bytes`].
    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < RTP_HEADER_BYTES {
            return Err(Error::Format(format!(
                "datagram of {} bytes is shorter than an RTP header",
                data.len()
            )));
        }
        if data[0] >> 6 != 2 {
            return Err(Error::Format(format!("RTP version {} unsupported", data[0] >> 6)));
        }
        if data[0] & 0x3F != 0 {
            return Err(Error::Format(
                "RTP padding/extension/CSRC are not supported".into(),
            ));
        }
        Ok(RtpPacket {
            payload_type: data[1] & 0x7F,
            sequence: u16::from_be_bytes([data[2], data[3]]),
            timestamp: u32::from_be_bytes([data[4], data[5], data[6], data[7]]),
            ssrc: u32::from_be_bytes([data[8], data[9], data[10], data[11]]),
            payload: data[RTP_HEADER_BYTES..].to_vec(),
        })
    }

    /// Number of codec code units this packet carries.
    pub fn code_count(&self, codec: CodecId) -> usize {
        match codec {
            CodecId::Ulaw => self.payload.len(),
            CodecId::Dvi => self.payload.len() * 2,
        }
    }
}

/// Packs codes into payload bytes: μ-law one code per byte; DVI two codes
/// per byte, first code in the high nibble. An odd DVI tail is padded with
/// one silence code.
pub fn pack_codes(codec: CodecId, codes: &[u8]) -> Vec<u8> {
    match codec {
        CodecId::Ulaw => codes.to_vec(),
        CodecId::Dvi => {
            let mut out = Vec::with_capacity(codes.len().div_ceil(2));
            let mut chunks = codes.chunks_exact(2);
            for pair in &mut chunks {
                out.push(pair[0] << 4 | pair[1]);
            }
            if let [last] = chunks.remainder() {
                out.push(last << 4 | codec.silence_code());
            }
            out
        }
    }
}

/// Inverse of [`pack_codes`] (DVI yields both nibbles, pad included).
pub fn unpack_codes(codec: CodecId, payload: &[u8]) -> Vec<u8> {
    match codec {
        CodecId::Ulaw => payload.to_vec(),
        CodecId::Dvi => {
            let mut out = Vec::with_capacity(payload.len() * 2);
            for &b in payload {
                out.push(b >> 4);
                out.push(b & 0x0F);
            }
            out
        }
    }
}

/// Frames a whole stream into packets of `frame_codes` codes (final frame
/// may be short). Sequences count up from `first_sequence`; timestamps
/// accumulate each packet's code count, so receivers can size loss gaps
/// exactly.
pub fn packetize_from(
    stream: &EncodedStream,
    frame_codes: usize,
    ssrc: u32,
    first_sequence: u16,
    first_timestamp: u32,
) -> Result<Vec<RtpPacket>> {
    if stream.is_empty() {
        return Err(Error::Argument("cannot packetize an empty stream".into()));
    }
    if frame_codes == 0 {
        return Err(Error::Argument("frame size must be positive".into()));
    }
    let pt = payload_type_for(stream.codec);
    let mut packets = Vec::with_capacity(stream.len().div_ceil(frame_codes));
    let mut sequence = first_sequence;
    let mut timestamp = first_timestamp;
    for frame in stream.codes.chunks(frame_codes) {
        packets.push(RtpPacket {
            payload_type: pt,
            sequence,
            timestamp,
            ssrc,
            payload: pack_codes(stream.codec, frame),
        });
        sequence = sequence.wrapping_add(1);
        timestamp = timestamp.wrapping_add(frame.len() as u32);
    }
    Ok(packets)
}

/// [`packetize_from`] with sequence and timestamp starting at zero.
pub fn packetize(stream: &EncodedStream, frame_codes: usize, ssrc: u32) -> Result<Vec<RtpPacket>> {
    packetize_from(stream, frame_codes, ssrc, 0, 0)
}

/// One hole in the received sequence space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Gap {
    /// Sequence number of the first missing packet.
    pub first_sequence: u16,
    /// How many consecutive packets are missing.
    pub packets: u16,
    /// How many silence codes were substituted for them.
    pub filled_codes: usize,
}

/// Where the received stream had holes and how they were filled.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GapReport {
    pub gaps: Vec<Gap>,
}

impl GapReport {
    pub fn lost_packets(&self) -> usize {
        self.gaps.iter().map(|g| g.packets as usize).sum()
    }

    pub fn filled_codes(&self) -> usize {
        self.gaps.iter().map(|g| g.filled_codes).sum()
    }
}

/// Reassembles packets into one code stream: sorts by sequence (wrapping),
/// drops duplicates, and fills every hole with silence codes sized from the
/// timestamp delta so the audio timeline length is preserved.
pub fn depacketize(packets: &[RtpPacket]) -> Result<(EncodedStream, GapReport)> {
    let first = packets
        .first()
        .ok_or_else(|| Error::Argument("no packets to reassemble".into()))?;
    let codec = codec_for_payload_type(first.payload_type)?;
    for p in packets {
        if p.ssrc != first.ssrc {
            return Err(Error::StreamConfusion { expected: first.ssrc, got: p.ssrc });
        }
        if p.payload_type != first.payload_type {
            return Err(Error::Format(format!(
                "payload type changed mid-stream: {} then {}",
                first.payload_type, p.payload_type
            )));
        }
    }

    // Order by sequence distance from the first arrival; wrapping_sub as
    // i16 keeps ordering correct across the 16-bit boundary.
    let base = first.sequence;
    let mut ordered: Vec<&RtpPacket> = packets.iter().collect();
    ordered.sort_by_key(|p| p.sequence.wrapping_sub(base) as i16);
    ordered.dedup_by_key(|p| p.sequence);

    let mut codes = Vec::new();
    let mut report = GapReport::default();
    let mut prev: Option<&RtpPacket> = None;
    for packet in ordered {
        if let Some(last) = prev {
            let seq_delta = packet.sequence.wrapping_sub(last.sequence);
            if seq_delta > 1 {
                let expected_ts = last.timestamp.wrapping_add(last.code_count(codec) as u32);
                let missing = packet.timestamp.wrapping_sub(expected_ts) as usize;
                codes.extend(std::iter::repeat_n(codec.silence_code(), missing));
                report.gaps.push(Gap {
                    first_sequence: last.sequence.wrapping_add(1),
                    packets: seq_delta - 1,
                    filled_codes: missing,
                });
            }
        }
        codes.extend(unpack_codes(codec, &packet.payload));
        prev = Some(packet);
    }
    Ok((EncodedStream::new(codec, codes)?, report))
}

/// Deterministic fault injection: independent drops plus adjacent swaps.
#[derive(Clone, Copy, Debug)]
pub struct LossModel {
    pub loss_probability: f64,
    pub reorder_probability: f64,
    pub seed: u64,
}

impl LossModel {
    pub fn new(loss_probability: f64, reorder_probability: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&loss_probability) {
            return Err(Error::Argument(format!(
                "loss probability {loss_probability} outside [0, 1)"
            )));
        }
        if !(0.0..1.0).contains(&reorder_probability) {
            return Err(Error::Argument(format!(
                "reorder probability {reorder_probability} outside [0, 1)"
            )));
        }
        Ok(LossModel { loss_probability, reorder_probability, seed })
    }

    /// A channel that delivers everything, in order.
    pub fn lossless() -> Self {
        LossModel { loss_probability: 0.0, reorder_probability: 0.0, seed: 0 }
    }

    fn state(&self) -> FaultState {
        FaultState {
            rng: SplitMix64::new(self.seed),
            held: None,
            loss_probability: self.loss_probability,
            reorder_probability: self.reorder_probability,
        }
    }

    /// Applies the model to a whole batch (simulation path).
    pub fn filter(&self, packets: &[RtpPacket]) -> Vec<RtpPacket> {
        let mut state = self.state();
        let mut out = Vec::with_capacity(packets.len());
        for p in packets {
            state.admit(p.clone(), &mut |q| out.push(q));
        }
        state.flush(&mut |q| out.push(q));
        out
    }
}

/// Streaming form of [`LossModel::filter`]: feed one packet at a time.
struct FaultState {
    rng: SplitMix64,
    held: Option<RtpPacket>,
    loss_probability: f64,
    reorder_probability: f64,
}

impl FaultState {
    fn admit(&mut self, packet: RtpPacket, deliver: &mut dyn FnMut(RtpPacket)) {
        if self.rng.next_f64() < self.loss_probability {
            return;
        }
        if let Some(earlier) = self.held.take() {
            // The held packet goes out *after* this one: adjacent swap.
            deliver(packet);
            deliver(earlier);
        } else if self.rng.next_f64() < self.reorder_probability {
            self.held = Some(packet);
        } else {
            deliver(packet);
        }
    }

    fn flush(&mut self, deliver: &mut dyn FnMut(RtpPacket)) {
        if let Some(p) = self.held.take() {
            deliver(p);
        }
    }
}

/// A unidirectional packet pipe. `recv` returns `Ok(None)` when no packet
/// arrived within the endpoint's patience (timeout or queue momentarily
/// empty).
pub trait PacketChannel {
    fn send(&mut self, packet: &RtpPacket) -> Result<()>;
    fn recv(&mut self) -> Result<Option<RtpPacket>>;
}

struct MemoryQueue {
    queue: Mutex<(VecDeque<RtpPacket>, bool)>, // (packets, closed)
    wake: Condvar,
}

/// In-memory half-duplex channel endpoint. Create pairs with
/// [`memory_link`]; sends pass through the link's fault model.
pub struct MemoryChannel {
    outgoing: Arc<MemoryQueue>,
    incoming: Arc<MemoryQueue>,
    faults: FaultState,
    recv_patience: Duration,
}

/// Builds a bidirectional in-memory link. Each direction applies its own
/// fault model. Endpoints are `Send` and may live on different threads.
pub fn memory_link(a_to_b: LossModel, b_to_a: LossModel) -> (MemoryChannel, MemoryChannel) {
    let ab = Arc::new(MemoryQueue { queue: Mutex::new((VecDeque::new(), false)), wake: Condvar::new() });
    let ba = Arc::new(MemoryQueue { queue: Mutex::new((VecDeque::new(), false)), wake: Condvar::new() });
    let a = MemoryChannel {
        outgoing: Arc::clone(&ab),
        incoming: Arc::clone(&ba),
        faults: a_to_b.state(),
        recv_patience: Duration::ZERO,
    };
    let b = MemoryChannel {
        outgoing: ba,
        incoming: ab,
        faults: b_to_a.state(),
        recv_patience: Duration::ZERO,
    };
    (a, b)
}

impl MemoryChannel {
    /// How long `recv` blocks waiting for a packet before returning
    /// `Ok(None)`. Zero (the default) polls without blocking.
    pub fn set_recv_patience(&mut self, patience: Duration) {
        self.recv_patience = patience;
    }

    /// Marks this endpoint's outgoing direction closed; the peer's `recv`
    /// then reports [`Error::ChannelClosed`] once drained.
    pub fn close(&mut self) {
        self.faults.flush(&mut |p| {
            let mut guard = self.outgoing.queue.lock().unwrap();
            guard.0.push_back(p);
        });
        self.outgoing.queue.lock().unwrap().1 = true;
        self.outgoing.wake.notify_all();
    }
}

impl PacketChannel for MemoryChannel {
    fn send(&mut self, packet: &RtpPacket) -> Result<()> {
        {
            let guard = self.outgoing.queue.lock().unwrap();
            if guard.1 {
                return Err(Error::ChannelClosed);
            }
        }
        self.faults.admit(packet.clone(), &mut |p| {
            let mut guard = self.outgoing.queue.lock().unwrap();
            guard.0.push_back(p);
            self.outgoing.wake.notify_all();
        });
        Ok(())
    }

    fn recv(&mut self) -> Result<Option<RtpPacket>> {
        let mut guard = self.incoming.queue.lock().unwrap();
        loop {
            if let Some(p) = guard.0.pop_front() {
                return Ok(Some(p));
            }
            if guard.1 {
                return Err(Error::ChannelClosed);
            }
            if self.recv_patience.is_zero() {
                return Ok(None);
            }
            let (g, timed_out) = self
                .incoming
                .wake
                .wait_timeout(guard, self.recv_patience)
                .unwrap();
            guard = g;
            if timed_out.timed_out() && guard.0.is_empty() {
                return Ok(None);
            }
        }
    }
}

/// UDP channel endpoint: datagrams to a fixed peer, faults applied on send.
pub struct UdpChannel {
    socket: UdpSocket,
    peer: SocketAddr,
    faults: FaultState,
    buf: Vec<u8>,
}

impl UdpChannel {
    /// Binds `local`, fixes `peer` as the send target, and applies `faults`
    /// to outgoing packets. `recv_patience` bounds each `recv` call.
    pub fn bind(
        local: impl ToSocketAddrs,
        peer: impl ToSocketAddrs,
        faults: LossModel,
        recv_patience: Duration,
    ) -> Result<Self> {
        let socket = UdpSocket::bind(local)?;
        let peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Argument("peer address resolved to nothing".into()))?;
        socket.set_read_timeout(Some(recv_patience.max(Duration::from_millis(1))))?;
        Ok(UdpChannel {
            socket,
            peer,
            faults: faults.state(),
            buf: vec![0u8; 65536],
        })
    }

    /// The local address actually bound (useful with port 0).
    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.socket.local_addr()?)
    }

    /// Redirects outgoing packets to `peer`. Lets two endpoints bind
    /// ephemeral ports first and exchange addresses afterwards.
    pub fn set_peer(&mut self, peer: impl ToSocketAddrs) -> Result<()> {
        self.peer = peer
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| Error::Argument("peer address resolved to nothing".into()))?;
        Ok(())
    }
}

impl PacketChannel for UdpChannel {
    fn send(&mut self, packet: &RtpPacket) -> Result<()> {
        let socket = &self.socket;
        let peer = self.peer;
        let mut err = None;
        self.faults.admit(packet.clone(), &mut |p| {
            if err.is_none() {
                if let Err(e) = socket.send_to(&p.to_bytes(), peer) {
                    err = Some(e);
                }
            }
        });
        match err {
            Some(e) => Err(e.into()),
            None => Ok(()),
        }
    }

    fn recv(&mut self) -> Result<Option<RtpPacket>> {
        match self.socket.recv_from(&mut self.buf) {
            Ok((n, _)) => Ok(Some(RtpPacket::from_bytes(&self.buf[..n])?)),
            Err(e)
                if e.kind() == std::io::ErrorKind::WouldBlock
                    || e.kind() == std::io::ErrorKind::TimedOut =>
            {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}
