//! Session state machines for covert transfers.
//!
//! Two engines — one per endpoint role — exchange hidden-bit windows. The
//! sender bursts a request (header + data segments) and then waits; the
//! receiver fills segments, acknowledges on a configurable cadence, and
//! asks for repairs when packets go missing. Neither header family carries
//! segment indices, so loss recovery leans on *ordinal anchoring*: every
//! sender packet occupies one position in its RTP sequence space, the
//! driver hands `handle_incoming` that position, and a burst's packets sit
//! at fixed distances from its opening header. A data packet's position
//! therefore names its segment exactly, even when neighbors were lost or
//! arrived swapped.
//!
//! Recovery differs by design:
//! - **Fixed-layout (static)**: the receiver answers a gap with RESEND and
//!   the sender re-bursts the whole request; filled segments are kept, and
//!   a request-parity bit carried in the version field keeps a finished
//!   request's stale re-burst from being mistaken for a new one.
//! - **Chunked (dynamic)**: the receiver learns the segment count from the
//!   end bracket's anchored position, then asks for one missing segment at
//!   a time (a RESEND chunk carrying the index; index 255 demands a full
//!   re-burst); the sender answers with that segment's length/data pair. A
//!   repair data chunk is trusted only when its length chunk arrived
//!   immediately before it and after the ask, so a stale length register
//!   can never mis-size a segment.
//!
//! When acknowledgments stop flowing, the sender emits a *status query*
//! (an OK-response packet flowing sender→receiver): the receiver re-acks a
//! finished request or nags for the missing pieces. Timing assumptions are
//! mild — delivery latency under the re-ask cadence (4 ticks) and reorder
//! displacement of at most one packet — and both hold for the in-memory
//! link and loopback UDP driven in lockstep.

use std::collections::VecDeque;
use std::fmt;

use crate::bits::BitString;
use crate::chunks::{self, DecodeContext, DynChunk};
use crate::codec::CodecId;
use crate::error::{Error, Result};
use crate::header::{
    decode_static, encode_static, Command, Format, HeaderDesign, StaticHeader,
};
use crate::rng::{OffsetSchedule, SplitMix64, MAX_OFFSET_CODES};
use crate::stego::{EmbedAlgorithm, Placement, PlacementMode};

/// Idle ticks before the sender probes the receiver with a status query.
pub const SENDER_TIMEOUT_TICKS: usize = 10;
/// Idle ticks before the receiver re-sends its current nag (RESEND/ask).
pub const RECEIVER_NAG_TICKS: usize = 4;
/// Repair-ask index meaning "re-burst everything" (so real indices are 0–254).
pub const RESTART_INDEX: u8 = 255;

/// Largest number of data segments one request may carry, per design.
pub const MAX_SEGMENTS_STATIC: usize = 63; // 6-bit counter in the request
pub const MAX_SEGMENTS_DYNAMIC: usize = 255; // 8-bit ask index, 255 reserved

/// Which endpoint this engine drives.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Sender,
    Receiver,
}

/// Everything both endpoints must agree on before a session starts.
#[derive(Clone, Copy, Debug)]
pub struct SessionConfig {
    pub header_design: HeaderDesign,
    pub codec: CodecId,
    pub alg: EmbedAlgorithm,
    pub placement: Placement,
    /// Cover codes per packet.
    pub frame_codes: usize,
    /// Acknowledge every n-th newly filled segment.
    pub ack_every_n: usize,
    /// Consecutive retransmission rounds without any acknowledged progress
    /// before the sender aborts the request.
    pub resend_limit: usize,
    /// Cap on payload bytes per data segment, below what capacity allows.
    pub segment_limit: Option<u8>,
    /// Seed shared by both ends: drives the offset schedule and filler bits.
    pub seed: u64,
}

impl SessionConfig {
    /// The primary evaluation setup: 8-bit companded audio, one hidden bit
    /// per code, fixed-layout headers at a fixed zero offset, 160-code
    /// frames, per-segment acknowledgment.
    pub fn baseline() -> Self {
        SessionConfig {
            header_design: HeaderDesign::Static,
            codec: CodecId::Ulaw,
            alg: EmbedAlgorithm::Lsb1,
            placement: Placement { mode: PlacementMode::Fixed, initial_offset_codes: 0 },
            frame_codes: 160,
            ack_every_n: 1,
            resend_limit: 32,
            segment_limit: None,
            seed: 0,
        }
    }

    /// Embed offset (in codes) for the packet at `ordinal`.
    pub fn offset_for(&self, ordinal: u64) -> usize {
        match self.placement.mode {
            PlacementMode::Fixed => self.placement.initial_offset_codes,
            PlacementMode::Chained => OffsetSchedule::new(self.seed).offset_at(ordinal),
        }
    }

    /// Largest offset any packet of this session can use.
    pub fn worst_offset_codes(&self) -> usize {
        match self.placement.mode {
            PlacementMode::Fixed => self.placement.initial_offset_codes,
            PlacementMode::Chained => MAX_OFFSET_CODES,
        }
    }

    /// Hidden bits available in every packet at the worst-case offset.
    pub fn gross_capacity_bits(&self) -> usize {
        self.frame_codes.saturating_sub(self.worst_offset_codes()) * self.alg.bits_per_code()
    }

    /// Bits reserved in every packet for the chained-placement offset
    /// announcement (a trailing offset chunk in the chunked design; the
    /// fixed-layout headers carry the field inside the header itself).
    pub fn appendix_bits(&self) -> usize {
        if self.placement.mode == PlacementMode::Chained
            && self.header_design == HeaderDesign::Dynamic
        {
            chunks::NHO_CHUNK_BITS
        } else {
            0
        }
    }

    /// Hidden bits per packet left for protocol content.
    pub fn content_capacity_bits(&self) -> usize {
        self.gross_capacity_bits().saturating_sub(self.appendix_bits())
    }

    /// Payload bytes per data segment under this configuration.
    pub fn segment_bytes(&self) -> Result<usize> {
        let cap = self.content_capacity_bits();
        let header_bits = match self.header_design {
            HeaderDesign::Static => crate::header::DATA_BITS,
            HeaderDesign::Dynamic => chunks::DAT_TAG_BITS,
        };
        let seg = cap.saturating_sub(header_bits) / 8;
        if seg == 0 {
            return Err(Error::Capacity {
                needed_bits: header_bits + 8,
                available_bits: cap,
            });
        }
        let seg = seg.min(255);
        Ok(match self.segment_limit {
            Some(limit) => seg.min(limit.max(1) as usize),
            None => seg,
        })
    }

    /// Largest payload one request can carry.
    pub fn max_request_bytes(&self) -> Result<usize> {
        let per = self.segment_bytes()?;
        let segments = match self.header_design {
            HeaderDesign::Static => MAX_SEGMENTS_STATIC,
            HeaderDesign::Dynamic => MAX_SEGMENTS_DYNAMIC,
        };
        Ok(per * segments)
    }

    /// Checks the configuration can at least keep a channel alive (filler
    /// and control packets fit every frame).
    pub fn validate(&self) -> Result<()> {
        self.alg.validate_for(self.codec)?;
        if self.ack_every_n == 0 {
            return Err(Error::Argument("ack cadence must be at least 1".into()));
        }
        if self.placement.initial_offset_codes >= self.frame_codes {
            return Err(Error::Argument(format!(
                "initial offset {} cannot reach into a {}-code frame",
                self.placement.initial_offset_codes, self.frame_codes
            )));
        }
        let floor = match self.header_design {
            // Widest idle-channel element: the 16-bit filler header, or the
            // 12-bit filler chunk (the offset appendix is already folded
            // into content_capacity_bits).
            HeaderDesign::Static => crate::header::DUMMY_BITS,
            HeaderDesign::Dynamic => chunks::DMY_CHUNK_BITS,
        };
        let cap = self.content_capacity_bits();
        if cap < floor {
            return Err(Error::Capacity { needed_bits: floor, available_bits: cap });
        }
        Ok(())
    }

    /// Checks a transfer (not just idle filler) fits: data segments plus
    /// the repair vocabulary.
    pub fn validate_for_transfer(&self) -> Result<()> {
        self.validate()?;
        self.segment_bytes()?;
        let cap = self.content_capacity_bits();
        let floor = match self.header_design {
            HeaderDesign::Static => crate::header::REQUEST_BITS,
            // RESEND + LEN + one index byte in a single repair-ask packet.
            HeaderDesign::Dynamic => {
                chunks::RES_CHUNK_BITS + chunks::LEN_CHUNK_BITS + chunks::DAT_TAG_BITS + 8
            }
        };
        if cap < floor {
            return Err(Error::Capacity { needed_bits: floor, available_bits: cap });
        }
        Ok(())
    }
}

/// What one outgoing packet carries, for transcripts and statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketKind {
    Dummy,
    /// Opening header: fixed-layout request, or the begin bracket.
    Request,
    /// Version/format status updates at the head of a chunked burst.
    Prelude,
    /// Burst length announcement (chunked design only).
    Length,
    /// Data segment (header+bytes in one window, or a data chunk).
    Data,
    /// End bracket of a chunked burst.
    EndMark,
    /// Receiver acknowledgment.
    Ack,
    /// Receiver retransmission demand (whole request).
    Resend,
    /// Receiver ask for one missing segment (chunked design).
    RepairAsk,
    /// Sender repair: the re-sent length announcement or data segment.
    Repair,
    /// Sender status query after an acknowledgment drought.
    Query,
}

impl PacketKind {
    pub fn is_dummy(self) -> bool {
        self == PacketKind::Dummy
    }

    /// Receiver-to-sender protocol packets.
    pub fn is_response(self) -> bool {
        matches!(self, PacketKind::Ack | PacketKind::Resend | PacketKind::RepairAsk)
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PacketKind::Dummy => "DMY",
            PacketKind::Request => "REQ",
            PacketKind::Prelude => "UPD",
            PacketKind::Length => "LEN",
            PacketKind::Data => "DAT",
            PacketKind::EndMark => "EOM",
            PacketKind::Ack => "OK",
            PacketKind::Resend => "RESEND",
            PacketKind::RepairAsk => "ASK",
            PacketKind::Repair => "FIX",
            PacketKind::Query => "QRY",
        })
    }
}

/// One packet's hidden content, ready to embed.
#[derive(Clone, Debug)]
pub struct Outgoing {
    pub kind: PacketKind,
    pub bits: BitString,
    /// Code offset this packet's window starts at.
    pub offset_codes: usize,
    /// This packet's position in the sender's own stream.
    pub ordinal: u64,
}

/// Events an engine surfaces to its driver.
#[derive(Clone, Debug, PartialEq)]
pub enum EngineAction {
    /// A complete request's payload, exactly once per request.
    Deliver { payload: Vec<u8>, fmt: Format },
    /// Something non-fatal was ignored (undecodable window, stale message).
    Notify(String),
    /// The engine gave up on the current request.
    Abort(String),
}

/// Counters for transcripts and tests.
#[derive(Clone, Debug, Default)]
pub struct EngineStats {
    pub packets_sent: usize,
    pub dummies_sent: usize,
    /// Non-dummy packets sent.
    pub protocol_sent: usize,
    /// Receiver→sender protocol packets sent (acks, resends, asks).
    pub responses_sent: usize,
    /// RESEND/ask packets sent (receiver side).
    pub resend_signals_sent: usize,
    /// Retransmission rounds performed (sender side): re-bursts, repairs,
    /// and status queries all draw on the same budget.
    pub resend_events: usize,
    pub acks_received: usize,
    pub hidden_bits_sent: usize,
    pub deliveries: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Idle,
    RequestSent,
    AwaitingAck,
    Done,
    Failed,
}

/// Queued outgoing content, encoded at emission time so the next-offset
/// field can be stamped with the schedule value for the following packet.
#[derive(Clone, Debug)]
enum Draft {
    Static { header: StaticHeader, body: BitString },
    Chunks(Vec<DynChunk>),
}

/// Receiver-side state of the request currently being assembled.
#[derive(Clone, Debug)]
struct RxRequest {
    /// Ordinal of the opening header (request or begin bracket).
    anchor: u64,
    /// Request parity (fixed-layout design), from the version field.
    parity: Option<u8>,
    fmt: Format,
    /// Packets between the begin bracket and the first length/data pair
    /// (chunked design): 2 or 3 depending on whether a format update was
    /// included. Inferred from ordinal parity and then pinned.
    prelude: Option<u64>,
    /// Segment count: the fixed-layout request announces it; the chunked
    /// design learns it from the end bracket's anchored position.
    total: Option<usize>,
    slots: Vec<Option<Vec<u8>>>,
    fills_since_ack: usize,
    delivered: bool,
}

impl RxRequest {
    fn complete(&self) -> bool {
        match self.total {
            Some(total) => {
                self.slots.len() >= total && self.slots[..total].iter().all(|s| s.is_some())
            }
            None => false,
        }
    }

    fn lowest_missing(&self) -> Option<usize> {
        let total = self.total?;
        (0..total).find(|&j| self.slots.get(j).is_none_or(|s| s.is_none()))
    }

    /// Chunked design: what segment index a data packet at distance `d`
    /// from the anchor names, trying both feasible prelude lengths and
    /// pinning the one whose parity fits. Exactly one candidate can fit,
    /// because the two lengths differ by one packet.
    fn data_index_at(&mut self, d: u64) -> Option<usize> {
        let candidates: &[u64] = match self.prelude {
            Some(p) => &[p],
            None => &[2, 3],
        };
        for &p in candidates {
            if let Some(rel) = d.checked_sub(p + 1) {
                if rel % 2 == 0 {
                    self.prelude = Some(p);
                    return Some((rel / 2) as usize);
                }
            }
        }
        None
    }

    /// Chunked design: segment count implied by an end bracket at distance
    /// `d` from the anchor, with the same prelude inference.
    fn count_from_end_mark(&mut self, d: u64) -> Option<usize> {
        let candidates: &[u64] = match self.prelude {
            Some(p) => &[p],
            None => &[2, 3],
        };
        for &p in candidates {
            if let Some(rel) = d.checked_sub(p) {
                if rel % 2 == 0 {
                    self.prelude = Some(p);
                    return Some((rel / 2) as usize);
                }
            }
        }
        None
    }
}

/// An outstanding single-segment repair ask (chunked design).
#[derive(Clone, Copy, Debug)]
struct Ask {
    index: usize,
    /// Arrival count when the ask was issued; repair data is trusted only
    /// if its length chunk arrived after this point.
    issued_at_arrival: u64,
    age_ticks: usize,
}

/// One endpoint of a covert session.
pub struct SessionEngine {
    cfg: SessionConfig,
    role: Role,
    noise: SplitMix64,
    send_ordinal: u64,
    tx: VecDeque<(PacketKind, Draft)>,
    pending_actions: Vec<EngineAction>,

    // Sender state.
    phase: Phase,
    segments: Vec<Vec<u8>>,
    fmt: Format,
    parity: u8,
    /// Status updates frozen per request, replayed verbatim on re-bursts
    /// so the burst layout stays stable.
    prelude_updates: Vec<DynChunk>,
    announced_fmt: Option<Format>,
    acks_needed: usize,
    acks_got: usize,
    idle_ticks: usize,
    resends_done: usize,

    // Receiver state.
    rx: Option<RxRequest>,
    delivered_parity: Option<u8>,
    dyn_ctx: DecodeContext,
    arrivals: u64,
    /// Most recent arrival, if it was a length chunk: (ordinal, arrival
    /// count, announced bytes).
    fresh_len: Option<(u64, u64, u8)>,
    ask: Option<Ask>,
    ticks_since_progress: usize,
    /// Data or end brackets arrived with no open request: the opening
    /// header was lost, so nag for a re-burst.
    orphan_evidence: bool,

    stats: EngineStats,
}

impl SessionEngine {
    pub fn new(cfg: SessionConfig, role: Role) -> Result<Self> {
        cfg.validate()?;
        Ok(SessionEngine {
            cfg,
            role,
            // Different filler streams per role; both derived from the seed.
            noise: SplitMix64::new(cfg.seed ^ (role as u64 + 1).wrapping_mul(0x9E37)),
            send_ordinal: 0,
            tx: VecDeque::new(),
            pending_actions: Vec::new(),
            phase: Phase::Idle,
            segments: Vec::new(),
            fmt: Format::Binary,
            parity: 0,
            prelude_updates: Vec::new(),
            announced_fmt: None,
            acks_needed: 0,
            acks_got: 0,
            idle_ticks: 0,
            resends_done: 0,
            rx: None,
            delivered_parity: None,
            dyn_ctx: DecodeContext::default(),
            arrivals: 0,
            fresh_len: None,
            ask: None,
            ticks_since_progress: 0,
            orphan_evidence: false,
            stats: EngineStats::default(),
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    /// Sender: the current request is fully acknowledged.
    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn is_failed(&self) -> bool {
        self.phase == Phase::Failed
    }

    /// True when this endpoint still has protocol packets queued.
    pub fn has_pending_work(&self) -> bool {
        !self.tx.is_empty()
    }

    /// Events raised outside `handle_incoming` (timeout aborts).
    pub fn drain_actions(&mut self) -> Vec<EngineAction> {
        std::mem::take(&mut self.pending_actions)
    }

    fn ver_for(parity: u8) -> u8 {
        1 + (parity & 1)
    }

    /// Queues a fresh request. Sender role only; any previous request must
    /// have completed.
    pub fn start_request(&mut self, payload: &[u8], fmt: Format) -> Result<()> {
        if self.role != Role::Sender {
            return Err(Error::Protocol("only the sender can start a request".into()));
        }
        if !matches!(self.phase, Phase::Idle | Phase::Done) {
            return Err(Error::Protocol(
                "a request is still in flight; wait for completion".into(),
            ));
        }
        self.cfg.validate_for_transfer()?;
        let seg_bytes = self.cfg.segment_bytes()?;
        let segments: Vec<Vec<u8>> = payload.chunks(seg_bytes).map(|c| c.to_vec()).collect();
        let max = match self.cfg.header_design {
            HeaderDesign::Static => MAX_SEGMENTS_STATIC,
            HeaderDesign::Dynamic => MAX_SEGMENTS_DYNAMIC,
        };
        if segments.len() > max {
            return Err(Error::Segmentation { segments: segments.len(), max });
        }
        if self.phase == Phase::Done {
            self.parity ^= 1;
        }
        self.segments = segments;
        self.fmt = fmt;
        // Status-update economy: the version alternates per request so it
        // is always announced; the format only when it actually changes.
        self.prelude_updates = {
            let mut updates = vec![DynChunk::Ver { ver: Self::ver_for(self.parity) }];
            if self.announced_fmt != Some(fmt) {
                updates.push(DynChunk::Fmt { fmt });
                self.announced_fmt = Some(fmt);
            }
            updates
        };
        self.acks_needed = match self.cfg.header_design {
            // Fixed layout: the completing fill's ack doubles as the final
            // one — exactly ceil(s/n) acks on the loss-free path.
            HeaderDesign::Static => {
                self.segments.len().div_ceil(self.cfg.ack_every_n).max(1)
            }
            // Chunked: the receiver cannot know a fill was the last until
            // the end bracket, so completion earns its own ack on top of
            // the cadence ones. An incomplete receiver can never reach
            // this count.
            HeaderDesign::Dynamic => self.segments.len() / self.cfg.ack_every_n + 1,
        };
        self.acks_got = 0;
        self.resends_done = 0;
        self.idle_ticks = 0;
        self.enqueue_burst();
        self.phase = Phase::RequestSent;
        Ok(())
    }

    /// Queues the full request burst (initial send and every re-burst).
    fn enqueue_burst(&mut self) {
        self.tx.clear();
        match self.cfg.header_design {
            HeaderDesign::Static => {
                let header = StaticHeader::Request {
                    nho: 0, // stamped at emission
                    fmt: self.fmt,
                    cnt: self.segments.len() as u8,
                    ver: Self::ver_for(self.parity),
                };
                self.tx.push_back((
                    PacketKind::Request,
                    Draft::Static { header, body: BitString::new() },
                ));
                for seg in &self.segments {
                    let header = StaticHeader::Data { nho: 0, len: seg.len() as u8 };
                    self.tx.push_back((
                        PacketKind::Data,
                        Draft::Static { header, body: BitString::from_bytes(seg) },
                    ));
                }
            }
            HeaderDesign::Dynamic => {
                self.tx.push_back((
                    PacketKind::Request,
                    Draft::Chunks(vec![DynChunk::Req { eom: false }]),
                ));
                for update in self.prelude_updates.clone() {
                    self.tx
                        .push_back((PacketKind::Prelude, Draft::Chunks(vec![update])));
                }
                for seg in &self.segments {
                    self.tx.push_back((
                        PacketKind::Length,
                        Draft::Chunks(vec![DynChunk::Len { bytes: seg.len() as u8 }]),
                    ));
                    self.tx.push_back((
                        PacketKind::Data,
                        Draft::Chunks(vec![DynChunk::Dat { bytes: seg.clone() }]),
                    ));
                }
                self.tx.push_back((
                    PacketKind::EndMark,
                    Draft::Chunks(vec![DynChunk::Req { eom: true }]),
                ));
            }
        }
    }

    /// Spends one unit of the retransmission budget; fails the request
    /// when it runs out.
    fn spend_resend_budget(&mut self) -> bool {
        self.resends_done += 1;
        self.stats.resend_events += 1;
        if self.resends_done > self.cfg.resend_limit {
            self.phase = Phase::Failed;
            self.tx.clear();
            self.pending_actions.push(EngineAction::Abort(format!(
                "gave up after {} retransmission rounds",
                self.cfg.resend_limit
            )));
            return false;
        }
        true
    }

    /// Produces this tick's packet: queued protocol content if any, filler
    /// otherwise. Exactly one call per outgoing packet.
    pub fn next_outgoing(&mut self) -> Result<Outgoing> {
        if self.tx.is_empty() {
            match self.role {
                Role::Sender => {
                    if self.phase == Phase::RequestSent {
                        self.phase = Phase::AwaitingAck;
                        self.idle_ticks = 0;
                    }
                    if self.phase == Phase::AwaitingAck {
                        self.idle_ticks += 1;
                        if self.idle_ticks >= SENDER_TIMEOUT_TICKS {
                            self.idle_ticks = 0;
                            if self.spend_resend_budget() {
                                // Ask where things stand rather than
                                // re-bursting blindly.
                                let query = match self.cfg.header_design {
                                    HeaderDesign::Static => Draft::Static {
                                        header: StaticHeader::Response {
                                            nho: 0,
                                            cmd: Command::Ok,
                                        },
                                        body: BitString::new(),
                                    },
                                    HeaderDesign::Dynamic => {
                                        Draft::Chunks(vec![DynChunk::Res { cmd: Command::Ok }])
                                    }
                                };
                                self.tx.push_back((PacketKind::Query, query));
                            }
                        }
                    }
                }
                Role::Receiver => {
                    let incomplete = self.rx.as_ref().is_some_and(|rx| !rx.delivered);
                    if incomplete || self.orphan_evidence {
                        self.ticks_since_progress += 1;
                        if let Some(ask) = &mut self.ask {
                            ask.age_ticks += 1;
                        }
                        let ask_stale =
                            self.ask.is_some_and(|a| a.age_ticks >= RECEIVER_NAG_TICKS);
                        if self.ticks_since_progress >= RECEIVER_NAG_TICKS || ask_stale {
                            self.ticks_since_progress = 0;
                            self.enqueue_nag();
                        }
                    }
                }
            }
        }

        let (kind, draft) = match self.tx.pop_front() {
            Some(item) => item,
            None => (PacketKind::Dummy, self.dummy_draft()),
        };
        if self.role == Role::Sender && self.tx.is_empty() && self.phase == Phase::RequestSent {
            self.phase = Phase::AwaitingAck;
            self.idle_ticks = 0;
        }

        let ordinal = self.send_ordinal;
        let offset = self.cfg.offset_for(ordinal);
        let next_offset = self.cfg.offset_for(ordinal + 1) as u8;
        let mut bits = match draft {
            Draft::Static { header, body } => {
                let mut bits = encode_static(&header.with_nho(next_offset))?;
                bits.extend(&body);
                bits
            }
            Draft::Chunks(chunk_list) => {
                let mut bits = BitString::new();
                for chunk in &chunk_list {
                    bits.extend(&chunks::encode_chunk(chunk)?);
                }
                bits
            }
        };
        if self.cfg.appendix_bits() > 0 {
            bits.extend(&chunks::encode_chunk(&DynChunk::Nho { offset: next_offset })?);
        }

        let window = (self.cfg.frame_codes - offset) * self.cfg.alg.bits_per_code();
        if bits.len() > window {
            return Err(Error::Capacity { needed_bits: bits.len(), available_bits: window });
        }

        self.send_ordinal += 1;
        self.stats.packets_sent += 1;
        self.stats.hidden_bits_sent += bits.len();
        if kind.is_dummy() {
            self.stats.dummies_sent += 1;
        } else {
            self.stats.protocol_sent += 1;
        }
        if kind.is_response() {
            self.stats.responses_sent += 1;
        }
        if matches!(kind, PacketKind::Resend | PacketKind::RepairAsk) {
            self.stats.resend_signals_sent += 1;
        }
        Ok(Outgoing { kind, bits, offset_codes: offset, ordinal })
    }

    fn dummy_draft(&mut self) -> Draft {
        let dmy = (self.noise.next_u64() & 0x1FF) as u16;
        match self.cfg.header_design {
            HeaderDesign::Static => Draft::Static {
                header: StaticHeader::Dummy { nho: 0, dmy },
                body: BitString::new(),
            },
            HeaderDesign::Dynamic => Draft::Chunks(vec![DynChunk::Dmy { dmy }]),
        }
    }

    /// Receiver: queue the appropriate complaint for the current state.
    fn enqueue_nag(&mut self) {
        if self.tx.iter().any(|(k, _)| k.is_response()) {
            return; // one complaint in flight at a time
        }
        match &self.rx {
            Some(rx) if !rx.delivered => match self.cfg.header_design {
                HeaderDesign::Static => {
                    self.queue_static_response(Command::Resend, PacketKind::Resend)
                }
                HeaderDesign::Dynamic => match rx.total {
                    Some(_) => {
                        if let Some(j) = rx.lowest_missing() {
                            self.queue_ask(j as u8, PacketKind::RepairAsk);
                            self.ask = Some(Ask {
                                index: j,
                                issued_at_arrival: self.arrivals,
                                age_ticks: 0,
                            });
                        }
                    }
                    // Segment count unknown (end bracket lost): restart.
                    None => self.queue_ask(RESTART_INDEX, PacketKind::Resend),
                },
            },
            Some(_) => {}
            None if self.orphan_evidence => match self.cfg.header_design {
                HeaderDesign::Static => {
                    self.queue_static_response(Command::Resend, PacketKind::Resend)
                }
                HeaderDesign::Dynamic => self.queue_ask(RESTART_INDEX, PacketKind::Resend),
            },
            None => {}
        }
    }

    fn queue_static_response(&mut self, cmd: Command, kind: PacketKind) {
        self.tx.push_back((
            kind,
            Draft::Static {
                header: StaticHeader::Response { nho: 0, cmd },
                body: BitString::new(),
            },
        ));
    }

    fn queue_ack(&mut self) {
        match self.cfg.header_design {
            HeaderDesign::Static => self.queue_static_response(Command::Ok, PacketKind::Ack),
            HeaderDesign::Dynamic => self.tx.push_back((
                PacketKind::Ack,
                Draft::Chunks(vec![DynChunk::Res { cmd: Command::Ok }]),
            )),
        }
    }

    /// Receiver, chunked design: RESEND + the index it wants (255 = all).
    fn queue_ask(&mut self, index: u8, kind: PacketKind) {
        self.tx.push_back((
            kind,
            Draft::Chunks(vec![
                DynChunk::Res { cmd: Command::Resend },
                DynChunk::Len { bytes: 1 },
                DynChunk::Dat { bytes: vec![index] },
            ]),
        ));
    }

    /// Processes one received hidden window. `ordinal` is the packet's
    /// position in the *peer's* send stream (derived from RTP sequence
    /// numbers by the driver), which survives loss and reordering.
    pub fn handle_incoming(&mut self, ordinal: u64, window: &BitString) -> Vec<EngineAction> {
        self.arrivals += 1;
        let mut actions = std::mem::take(&mut self.pending_actions);
        let new = match self.cfg.header_design {
            HeaderDesign::Static => self.incoming_static(ordinal, window),
            HeaderDesign::Dynamic => self.incoming_dynamic(ordinal, window),
        };
        actions.extend(new);
        actions
    }

    fn incoming_static(&mut self, ordinal: u64, window: &BitString) -> Vec<EngineAction> {
        let (header, consumed) = match decode_static(window) {
            Ok(decoded) => decoded,
            Err(e) => return vec![EngineAction::Notify(format!("undecodable window: {e}"))],
        };
        match (self.role, header) {
            (_, StaticHeader::Dummy { .. }) => vec![],
            (Role::Receiver, StaticHeader::Request { fmt, cnt, ver, .. }) => {
                self.receiver_open_static(ordinal, fmt, cnt as usize, ver)
            }
            (Role::Receiver, StaticHeader::Data { len, .. }) => {
                let need = consumed + 8 * len as usize;
                if window.len() < need {
                    return vec![EngineAction::Notify(format!(
                        "data window truncated: {} < {need} bits",
                        window.len()
                    ))];
                }
                let bytes = window
                    .slice(consumed, need)
                    .expect("bounds checked")
                    .to_bytes();
                self.receiver_fill_static(ordinal, bytes)
            }
            (Role::Receiver, StaticHeader::Response { cmd: Command::Ok, .. }) => {
                // Sender status query: re-ack or complain, immediately.
                self.answer_query()
            }
            (Role::Sender, StaticHeader::Response { cmd, .. }) => self.sender_on_response(cmd),
            _ => vec![EngineAction::Notify(format!(
                "unexpected {header} for this role"
            ))],
        }
    }

    fn incoming_dynamic(&mut self, ordinal: u64, window: &BitString) -> Vec<EngineAction> {
        let ctx = self.dyn_ctx;
        let (chunk, new_ctx, consumed) = match chunks::decode_chunk(window, &ctx) {
            Ok(decoded) => decoded,
            Err(e) => return vec![EngineAction::Notify(format!("undecodable window: {e}"))],
        };
        self.dyn_ctx = new_ctx;
        let mut fresh_len_update = None;
        let actions = match (self.role, &chunk) {
            (_, DynChunk::Dmy { .. }) => vec![],
            (_, DynChunk::Nho { .. }) | (_, DynChunk::Ver { .. }) | (_, DynChunk::Fmt { .. }) => {
                // Status updates: the register writes already happened when
                // the chunk was decoded. A format update also lands on the
                // request being assembled.
                if let (Some(rx), DynChunk::Fmt { fmt }) = (&mut self.rx, &chunk) {
                    if !rx.delivered {
                        rx.fmt = *fmt;
                    }
                }
                vec![]
            }
            (Role::Receiver, DynChunk::Req { eom: false }) => self.receiver_open_dynamic(ordinal),
            (Role::Receiver, DynChunk::Req { eom: true }) => self.receiver_end_mark(ordinal),
            (Role::Receiver, DynChunk::Len { bytes }) => {
                fresh_len_update = Some((ordinal, self.arrivals, *bytes));
                vec![]
            }
            (Role::Receiver, DynChunk::Dat { bytes }) => {
                self.receiver_dynamic_data(ordinal, bytes.clone())
            }
            (Role::Receiver, DynChunk::Res { cmd: Command::Ok }) => self.answer_query(),
            (Role::Sender, DynChunk::Res { cmd }) => match cmd {
                Command::Ok => self.sender_on_response(Command::Ok),
                Command::Resend => self.sender_on_ask(window, consumed),
            },
            _ => vec![EngineAction::Notify(format!(
                "unexpected chunk {chunk:?} for this role"
            ))],
        };
        self.fresh_len = fresh_len_update;
        actions
    }

    /// Receiver, fixed-layout design: a request header arrived.
    fn receiver_open_static(
        &mut self,
        ordinal: u64,
        fmt: Format,
        cnt: usize,
        ver: u8,
    ) -> Vec<EngineAction> {
        let parity = ver.saturating_sub(1) & 1;
        if let Some(rx) = &mut self.rx {
            if !rx.delivered && rx.parity == Some(parity) {
                // Re-burst of the request we're assembling: re-anchor.
                rx.anchor = ordinal;
                return vec![];
            }
        }
        if self.delivered_parity == Some(parity) {
            // Stale re-burst of a finished request (its final ack was
            // lost): acknowledge again, touch nothing.
            if !self.tx.iter().any(|(k, _)| *k == PacketKind::Ack) {
                self.queue_ack();
            }
            return vec![];
        }
        self.begin_request(ordinal, Some(parity), fmt, Some(cnt))
    }

    /// Receiver, chunked design: a begin bracket arrived.
    fn receiver_open_dynamic(&mut self, ordinal: u64) -> Vec<EngineAction> {
        if let Some(rx) = &mut self.rx {
            if !rx.delivered {
                // Restart re-burst of the in-flight request: keep what we
                // have, re-anchor, re-learn the segment count. The re-burst
                // replays the same status updates, so the pinned prelude
                // length still holds.
                rx.anchor = ordinal;
                rx.total = None;
                self.ask = None;
                return vec![];
            }
        }
        // Payload format persists in the status register across requests;
        // a fresh update arrives only when the value changes.
        let fmt = self.dyn_ctx.format.unwrap_or(Format::Binary);
        self.begin_request(ordinal, None, fmt, None)
    }

    fn begin_request(
        &mut self,
        ordinal: u64,
        parity: Option<u8>,
        fmt: Format,
        total: Option<usize>,
    ) -> Vec<EngineAction> {
        let slots = vec![None; total.unwrap_or(0)];
        self.rx = Some(RxRequest {
            anchor: ordinal,
            parity,
            fmt,
            prelude: None,
            total,
            slots,
            fills_since_ack: 0,
            delivered: false,
        });
        self.ask = None;
        self.ticks_since_progress = 0;
        self.orphan_evidence = false;
        // A zero-segment request is complete on arrival.
        self.check_completion()
    }

    /// Receiver, chunked design: the end bracket fixes the segment count
    /// via its anchored position.
    fn receiver_end_mark(&mut self, ordinal: u64) -> Vec<EngineAction> {
        let Some(rx) = &mut self.rx else {
            self.orphan_evidence = true;
            return vec![];
        };
        if rx.delivered || rx.total.is_some() {
            return vec![];
        }
        let Some(k) = ordinal
            .checked_sub(rx.anchor)
            .and_then(|d| rx.count_from_end_mark(d))
        else {
            return vec![EngineAction::Notify(
                "end bracket at an impossible position; ignoring".into(),
            )];
        };
        rx.total = Some(k);
        if rx.slots.len() < k {
            rx.slots.resize(k, None);
        } else {
            rx.slots.truncate(k);
        }
        self.check_completion()
    }

    /// Receiver, fixed-layout design: payload bytes arrived. The packet's
    /// distance from the request header names its segment.
    fn receiver_fill_static(&mut self, ordinal: u64, bytes: Vec<u8>) -> Vec<EngineAction> {
        let Some(rx) = &mut self.rx else {
            self.orphan_evidence = true;
            return vec![];
        };
        if rx.delivered {
            return vec![];
        }
        let total = rx.total.unwrap_or(0);
        match ordinal.checked_sub(rx.anchor + 1).map(|d| d as usize) {
            Some(idx) if idx < total => self.fill_segment(idx, bytes),
            _ => vec![EngineAction::Notify(
                "data outside the burst window; ignoring".into(),
            )],
        }
    }

    /// Receiver, chunked design: a data chunk arrived. Burst data fills by
    /// anchored position; repair data fills the outstanding ask.
    fn receiver_dynamic_data(&mut self, ordinal: u64, bytes: Vec<u8>) -> Vec<EngineAction> {
        // Decode trust: the matching length chunk must be the immediately
        // preceding arrival, or the register may have mis-sized this chunk.
        let fresh = self
            .fresh_len
            .is_some_and(|(len_ord, _, n)| len_ord + 1 == ordinal && n as usize == bytes.len());
        if !fresh {
            return vec![EngineAction::Notify(
                "data chunk without a fresh length; dropped".into(),
            )];
        }
        let Some(rx) = &mut self.rx else {
            self.orphan_evidence = true;
            return vec![];
        };
        if rx.delivered {
            return vec![];
        }
        let burst_idx = ordinal
            .checked_sub(rx.anchor)
            .and_then(|d| rx.data_index_at(d));
        let within_window = match (burst_idx, rx.total) {
            (Some(j), Some(total)) => j < total,
            (Some(_), None) => true, // count still unknown: trust the anchor
            (None, _) => false,
        };
        if within_window {
            let j = burst_idx.expect("checked above");
            return self.fill_segment(j, bytes);
        }
        // Outside the burst window: a repair answer for the outstanding ask,
        // valid only if its length chunk arrived after the ask was issued.
        if let Some(ask) = self.ask {
            let answer_fresh = self
                .fresh_len
                .is_some_and(|(_, len_arrival, _)| len_arrival > ask.issued_at_arrival);
            if answer_fresh {
                let j = ask.index;
                self.ask = None;
                return self.fill_segment(j, bytes);
            }
        }
        vec![EngineAction::Notify(
            "unsolicited data outside the burst window; ignoring".into(),
        )]
    }

    /// Receiver: stores one segment, acknowledging per cadence and
    /// delivering on completion.
    fn fill_segment(&mut self, idx: usize, bytes: Vec<u8>) -> Vec<EngineAction> {
        let Some(rx) = &mut self.rx else { return vec![] };
        if rx.slots.len() <= idx {
            rx.slots.resize(idx + 1, None);
        }
        if rx.slots[idx].is_some() {
            return vec![]; // duplicate
        }
        rx.slots[idx] = Some(bytes);
        rx.fills_since_ack += 1;
        self.ticks_since_progress = 0;
        if self.ask.is_some_and(|a| a.index == idx) {
            self.ask = None;
        }
        let cadence_due = rx.fills_since_ack >= self.cfg.ack_every_n;
        match self.cfg.header_design {
            HeaderDesign::Static => {
                // The completing fill's ack is the final ack.
                if !rx.complete() && cadence_due {
                    rx.fills_since_ack = 0;
                    self.queue_ack();
                    return vec![];
                }
            }
            HeaderDesign::Dynamic => {
                // Cadence acks never stand in for the completion ack: the
                // segment count may still be unknown here.
                if cadence_due {
                    rx.fills_since_ack = 0;
                    self.queue_ack();
                }
            }
        }
        self.check_completion()
    }

    /// Receiver: if the open request just completed, deliver it once and
    /// send the final acknowledgment.
    fn check_completion(&mut self) -> Vec<EngineAction> {
        let Some(rx) = &mut self.rx else { return vec![] };
        if rx.delivered || !rx.complete() {
            return vec![];
        }
        rx.delivered = true;
        rx.fills_since_ack = 0;
        let total = rx.total.unwrap_or(0);
        let payload: Vec<u8> = rx.slots[..total]
            .iter()
            .flat_map(|s| s.as_ref().expect("complete").iter().copied())
            .collect();
        let fmt = rx.fmt;
        self.delivered_parity = rx.parity.or(self.delivered_parity);
        self.ask = None;
        self.stats.deliveries += 1;
        self.queue_ack();
        vec![EngineAction::Deliver { payload, fmt }]
    }

    /// Receiver: a sender status query arrived — restate our position.
    fn answer_query(&mut self) -> Vec<EngineAction> {
        if self.role != Role::Receiver {
            return vec![EngineAction::Notify("stray response ignored".into())];
        }
        match &self.rx {
            Some(rx) if rx.delivered => {
                // Its final ack was lost: say OK again (once per query).
                if !self.tx.iter().any(|(k, _)| *k == PacketKind::Ack) {
                    self.queue_ack();
                }
            }
            Some(_) => {
                self.ticks_since_progress = 0;
                self.enqueue_nag();
            }
            None => {
                // We never saw the request at all: demand a re-burst.
                self.orphan_evidence = true;
                self.enqueue_nag();
            }
        }
        vec![]
    }

    /// Sender: an acknowledgment or resend demand arrived.
    fn sender_on_response(&mut self, cmd: Command) -> Vec<EngineAction> {
        if self.role != Role::Sender {
            return vec![EngineAction::Notify("stray response ignored".into())];
        }
        match cmd {
            Command::Ok => {
                if matches!(self.phase, Phase::RequestSent | Phase::AwaitingAck) {
                    self.acks_got += 1;
                    self.stats.acks_received += 1;
                    self.idle_ticks = 0;
                    // Progress: refresh the retransmission budget so long
                    // transfers aren't capped at a fixed repair count.
                    self.resends_done = 0;
                    if self.acks_got >= self.acks_needed {
                        self.phase = Phase::Done;
                        // Drop any unsent remnants (stale re-burst tails,
                        // queued queries): the receiver has everything.
                        self.tx.clear();
                    }
                }
                vec![]
            }
            Command::Resend => {
                if self.phase == Phase::AwaitingAck {
                    self.rearm_burst()
                } else {
                    vec![] // stale demand while still bursting
                }
            }
        }
    }

    fn rearm_burst(&mut self) -> Vec<EngineAction> {
        if self.spend_resend_budget() {
            self.enqueue_burst();
            self.phase = Phase::RequestSent;
            self.idle_ticks = 0;
        }
        vec![]
    }

    /// Sender, chunked design: a RESEND arrived — parse the index it
    /// carries (restart sentinel or one segment to repair).
    fn sender_on_ask(&mut self, window: &BitString, consumed: usize) -> Vec<EngineAction> {
        if self.phase != Phase::AwaitingAck {
            return vec![]; // stale while bursting
        }
        let mut ctx = DecodeContext::default();
        let mut pos = consumed;
        let mut index = None;
        for _ in 0..2 {
            match chunks::decode_chunk_at(window, pos, &ctx) {
                Ok((chunk, new_ctx, used)) => {
                    ctx = new_ctx;
                    pos += used;
                    if let DynChunk::Dat { bytes } = chunk {
                        index = bytes.first().copied();
                    }
                }
                Err(e) => {
                    return vec![EngineAction::Notify(format!("malformed ask: {e}"))];
                }
            }
        }
        let Some(index) = index else {
            return vec![EngineAction::Notify("ask carried no index".into())];
        };
        if index == RESTART_INDEX || index as usize >= self.segments.len() {
            // Restart demanded, or the receiver's window arithmetic went
            // stale — either way a full re-burst resynchronizes both ends.
            return self.rearm_burst();
        }
        if !self.spend_resend_budget() {
            return vec![];
        }
        let seg = self.segments[index as usize].clone();
        self.tx.push_back((
            PacketKind::Repair,
            Draft::Chunks(vec![DynChunk::Len { bytes: seg.len() as u8 }]),
        ));
        self.tx.push_back((
            PacketKind::Repair,
            Draft::Chunks(vec![DynChunk::Dat { bytes: seg }]),
        ));
        self.idle_ticks = 0;
        vec![]
    }
}

/// Running translation of wrapping RTP sequence numbers into monotone
/// stream ordinals. Assumes the peer's first packet is sequence 0, and
/// tolerates the adjacent swaps the channel can introduce.
#[derive(Clone, Copy, Debug, Default)]
pub struct SeqUnwrap {
    last_seq: u16,
    last_ordinal: u64,
}

impl SeqUnwrap {
    pub fn ordinal(&mut self, seq: u16) -> u64 {
        let delta = seq.wrapping_sub(self.last_seq) as i16 as i64;
        let ordinal = self.last_ordinal.saturating_add_signed(delta);
        if delta >= 0 {
            self.last_seq = seq;
            self.last_ordinal = ordinal;
        }
        ordinal
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(design: HeaderDesign) -> SessionConfig {
        SessionConfig {
            header_design: design,
            frame_codes: 320,
            seed: 7,
            ..SessionConfig::baseline()
        }
    }

    /// Drives a sender/receiver pair tick by tick without a transport:
    /// packets cross instantly unless told to drop.
    struct Bench {
        sender: SessionEngine,
        receiver: SessionEngine,
        delivered: Vec<(Vec<u8>, Format)>,
        sender_events: Vec<EngineAction>,
        ticks: usize,
        protocol_log: Vec<PacketKind>,
    }

    impl Bench {
        fn new(cfg: SessionConfig) -> Self {
            Bench {
                sender: SessionEngine::new(cfg, Role::Sender).unwrap(),
                receiver: SessionEngine::new(cfg, Role::Receiver).unwrap(),
                delivered: Vec::new(),
                sender_events: Vec::new(),
                ticks: 0,
                protocol_log: Vec::new(),
            }
        }

        fn tick_with(&mut self, drop_fwd: bool, drop_back: bool) {
            self.ticks += 1;
            let out_s = self.sender.next_outgoing().unwrap();
            let out_r = self.receiver.next_outgoing().unwrap();
            if !out_s.kind.is_dummy() {
                self.protocol_log.push(out_s.kind);
            }
            if !out_r.kind.is_dummy() {
                self.protocol_log.push(out_r.kind);
            }
            if !drop_fwd {
                for action in self.receiver.handle_incoming(out_s.ordinal, &out_s.bits) {
                    if let EngineAction::Deliver { payload, fmt } = action {
                        self.delivered.push((payload, fmt));
                    }
                }
            }
            if !drop_back {
                for action in self.sender.handle_incoming(out_r.ordinal, &out_r.bits) {
                    assert!(
                        !matches!(action, EngineAction::Deliver { .. }),
                        "sender must never deliver"
                    );
                    self.sender_events.push(action);
                }
            }
            self.sender_events.extend(self.sender.drain_actions());
        }

        fn tick(&mut self) {
            self.tick_with(false, false);
        }

        fn run_until_done(&mut self, max_ticks: usize) {
            while !self.sender.is_done() && self.ticks < max_ticks {
                assert!(!self.sender.is_failed(), "sender aborted");
                self.tick();
            }
            assert!(self.sender.is_done(), "no completion within {max_ticks} ticks");
        }
    }

    fn payload(n: usize, seed: u64) -> Vec<u8> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| rng.next_u64() as u8).collect()
    }

    #[test]
    fn static_three_segments_lossless_liveness() {
        let cfg = config(HeaderDesign::Static);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(3 * seg, 1);
        bench.sender.start_request(&data, Format::Binary).unwrap();
        bench.run_until_done(50);
        assert_eq!(bench.delivered, vec![(data, Format::Binary)]);
        // REQ + 3 DAT + 3 OK: the protocol-packet liveness bound at n=1.
        assert_eq!(bench.protocol_log.len(), 3 + 1 + 3);
        assert_eq!(bench.sender.stats().resend_events, 0);
    }

    #[test]
    fn static_liveness_formula_across_cadences() {
        for (s, n) in [(1usize, 1usize), (5, 2), (6, 3), (12, 5), (10, 10), (7, 64)] {
            let cfg = SessionConfig { ack_every_n: n, ..config(HeaderDesign::Static) };
            let mut bench = Bench::new(cfg);
            let seg = cfg.segment_bytes().unwrap();
            let data = payload(s * seg, 77 + s as u64);
            bench.sender.start_request(&data, Format::Binary).unwrap();
            bench.run_until_done(300);
            assert_eq!(bench.delivered.len(), 1, "s={s} n={n}");
            assert_eq!(
                bench.protocol_log.len(),
                s + 1 + s.div_ceil(n),
                "s={s} n={n}"
            );
        }
    }

    #[test]
    fn static_ack_cadence_cuts_responses() {
        let count_responses = |n: usize| {
            let cfg = SessionConfig { ack_every_n: n, ..config(HeaderDesign::Static) };
            let mut bench = Bench::new(cfg);
            let seg = cfg.segment_bytes().unwrap();
            let data = payload(40 * seg, 2);
            bench.sender.start_request(&data, Format::Binary).unwrap();
            bench.run_until_done(200);
            assert_eq!(bench.delivered.len(), 1);
            bench.receiver.stats().responses_sent
        };
        let every = count_responses(1);
        let sparse = count_responses(10);
        assert_eq!(every, 40);
        assert_eq!(sparse, 4);
    }

    #[test]
    fn static_lost_data_recovers_bit_exact() {
        let cfg = config(HeaderDesign::Static);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(3 * seg, 3);
        bench.sender.start_request(&data, Format::Text).unwrap();
        // Drop the second data packet (tick 2: REQ at 0, DAT0 at 1...).
        for tick in 0..80 {
            if bench.sender.is_done() {
                break;
            }
            bench.tick_with(tick == 2, false);
        }
        assert!(bench.sender.is_done());
        assert_eq!(bench.delivered, vec![(data, Format::Text)]);
        assert!(bench.sender.stats().resend_events >= 1);
        assert!(bench.receiver.stats().resend_signals_sent >= 1);
    }

    #[test]
    fn static_lost_request_recovers() {
        let cfg = config(HeaderDesign::Static);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(2 * seg, 4);
        bench.sender.start_request(&data, Format::Binary).unwrap();
        for tick in 0..80 {
            if bench.sender.is_done() {
                break;
            }
            bench.tick_with(tick == 0, false); // request header lost
        }
        assert!(bench.sender.is_done());
        assert_eq!(bench.delivered.len(), 1);
        assert_eq!(bench.delivered[0].0, data);
    }

    #[test]
    fn static_lost_final_ack_resolved_by_query() {
        let cfg = config(HeaderDesign::Static);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(seg, 5);
        bench.sender.start_request(&data, Format::Binary).unwrap();
        // Kill the return path long enough to lose the final ack; the
        // sender's status query then recovers it.
        for tick in 0..60 {
            if bench.sender.is_done() {
                break;
            }
            bench.tick_with(false, tick < 12);
        }
        assert!(bench.sender.is_done());
        assert_eq!(bench.delivered.len(), 1, "delivered exactly once");
    }

    #[test]
    fn static_segment_cap_is_sixty_three() {
        let cfg = config(HeaderDesign::Static);
        let mut engine = SessionEngine::new(cfg, Role::Sender).unwrap();
        let seg = cfg.segment_bytes().unwrap();
        let too_big = payload(64 * seg, 6);
        match engine.start_request(&too_big, Format::Binary) {
            Err(Error::Segmentation { segments: 64, max: 63 }) => {}
            other => panic!("expected segmentation error, got {other:?}"),
        }
        engine.start_request(&too_big[..63 * seg], Format::Binary).unwrap();
    }

    #[test]
    fn idle_engine_emits_seeded_dummies() {
        let cfg = SessionConfig {
            placement: Placement { mode: PlacementMode::Chained, initial_offset_codes: 0 },
            ..config(HeaderDesign::Static)
        };
        let mut engine = SessionEngine::new(cfg, Role::Sender).unwrap();
        let mut offsets = Vec::new();
        for ordinal in 0..6u64 {
            let out = engine.next_outgoing().unwrap();
            assert_eq!(out.kind, PacketKind::Dummy);
            assert_eq!(out.bits.len(), crate::header::DUMMY_BITS);
            assert_eq!(out.offset_codes, cfg.offset_for(ordinal));
            offsets.push(out.offset_codes);
        }
        // Same seed, same schedule.
        let mut again = SessionEngine::new(cfg, Role::Sender).unwrap();
        for &expected in &offsets {
            assert_eq!(again.next_outgoing().unwrap().offset_codes, expected);
        }
    }

    #[test]
    fn dynamic_dummy_chunk_is_twelve_bits() {
        let cfg = config(HeaderDesign::Dynamic);
        let mut engine = SessionEngine::new(cfg, Role::Sender).unwrap();
        let out = engine.next_outgoing().unwrap();
        assert_eq!(out.kind, PacketKind::Dummy);
        assert_eq!(out.bits.len(), chunks::DMY_CHUNK_BITS);
    }

    #[test]
    fn chained_dynamic_packets_carry_offset_appendix() {
        let cfg = SessionConfig {
            placement: Placement { mode: PlacementMode::Chained, initial_offset_codes: 0 },
            ..config(HeaderDesign::Dynamic)
        };
        let mut engine = SessionEngine::new(cfg, Role::Sender).unwrap();
        let out = engine.next_outgoing().unwrap();
        assert_eq!(
            out.bits.len(),
            chunks::DMY_CHUNK_BITS + chunks::NHO_CHUNK_BITS
        );
        // The appendix announces the next packet's scheduled offset.
        let (dmy, ctx, used) =
            chunks::decode_chunk(&out.bits, &DecodeContext::default()).unwrap();
        assert!(matches!(dmy, DynChunk::Dmy { .. }));
        let (nho, ctx2, _) = chunks::decode_chunk_at(&out.bits, used, &ctx).unwrap();
        assert!(matches!(nho, DynChunk::Nho { .. }));
        assert_eq!(ctx2.next_offset_codes, Some(cfg.offset_for(1) as u8));
    }

    #[test]
    fn dummy_in_idle_changes_nothing() {
        let cfg = config(HeaderDesign::Static);
        let mut sender = SessionEngine::new(cfg, Role::Sender).unwrap();
        let mut receiver = SessionEngine::new(cfg, Role::Receiver).unwrap();
        let out = sender.next_outgoing().unwrap();
        assert!(receiver.handle_incoming(out.ordinal, &out.bits).is_empty());
        let reply = receiver.next_outgoing().unwrap();
        assert_eq!(reply.kind, PacketKind::Dummy);
    }

    #[test]
    fn dynamic_empty_payload_round_trip() {
        let cfg = config(HeaderDesign::Dynamic);
        let mut bench = Bench::new(cfg);
        bench.sender.start_request(&[], Format::Binary).unwrap();
        bench.run_until_done(30);
        assert_eq!(bench.delivered, vec![(vec![], Format::Binary)]);
        // BOM, VER, FMT, EOM, then the completion ack.
        assert_eq!(
            bench.protocol_log,
            vec![
                PacketKind::Request,
                PacketKind::Prelude,
                PacketKind::Prelude,
                PacketKind::EndMark,
                PacketKind::Ack
            ]
        );
    }

    #[test]
    fn dynamic_multi_segment_lossless() {
        let cfg = config(HeaderDesign::Dynamic);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(5 * seg - 3, 8);
        bench.sender.start_request(&data, Format::Binary).unwrap();
        bench.run_until_done(60);
        assert_eq!(bench.delivered, vec![(data, Format::Binary)]);
        assert_eq!(bench.sender.stats().resend_events, 0);
    }

    #[test]
    fn dynamic_format_update_sent_only_on_change() {
        let cfg = config(HeaderDesign::Dynamic);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();

        let preludes_so_far = |bench: &Bench| {
            bench.protocol_log.iter().filter(|k| **k == PacketKind::Prelude).count()
        };

        bench.sender.start_request(&payload(seg, 20), Format::Binary).unwrap();
        bench.run_until_done(60);
        assert_eq!(preludes_so_far(&bench), 2); // version + format

        bench.sender.start_request(&payload(seg, 21), Format::Binary).unwrap();
        bench.run_until_done(200);
        assert_eq!(preludes_so_far(&bench), 3); // version only: format unchanged

        bench.sender.start_request(&payload(seg, 22), Format::Text).unwrap();
        bench.run_until_done(400);
        assert_eq!(preludes_so_far(&bench), 5); // format changed, announced again

        assert_eq!(bench.delivered.len(), 3);
        assert_eq!(bench.delivered[1].1, Format::Binary); // carried by register
        assert_eq!(bench.delivered[2].1, Format::Text);
    }

    #[test]
    fn dynamic_interior_loss_repaired_by_single_asks() {
        let cfg = config(HeaderDesign::Dynamic);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(6 * seg, 9);
        bench.sender.start_request(&data, Format::Binary).unwrap();
        // Burst layout: BOM,VER,FMT,(LEN,DAT)x6,EOM at ticks 0..=15.
        // Drop LEN2 (tick 7) and DAT4 (tick 12).
        for tick in 0..200 {
            if bench.sender.is_done() {
                break;
            }
            bench.tick_with(tick == 7 || tick == 12, false);
        }
        assert!(bench.sender.is_done());
        assert_eq!(bench.delivered, vec![(data, Format::Binary)]);
        assert!(bench.protocol_log.iter().any(|k| *k == PacketKind::RepairAsk));
        assert!(bench.protocol_log.iter().any(|k| *k == PacketKind::Repair));
    }

    #[test]
    fn dynamic_lost_end_mark_restarts() {
        let cfg = config(HeaderDesign::Dynamic);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let data = payload(2 * seg, 10);
        bench.sender.start_request(&data, Format::Binary).unwrap();
        // Burst: BOM,VER,FMT,LEN0,DAT0,LEN1,DAT1,EOM at ticks 0..=7.
        for tick in 0..200 {
            if bench.sender.is_done() {
                break;
            }
            bench.tick_with(tick == 7, false);
        }
        assert!(bench.sender.is_done());
        assert_eq!(bench.delivered, vec![(data, Format::Binary)]);
        assert!(bench.sender.stats().resend_events >= 1);
    }

    #[test]
    fn dynamic_seeded_loss_grind_is_bit_exact() {
        let cfg = config(HeaderDesign::Dynamic);
        let seg = cfg.segment_bytes().unwrap();
        for trial in 0..10u64 {
            let mut bench = Bench::new(cfg);
            let data = payload(11 * seg + 5, 100 + trial);
            bench.sender.start_request(&data, Format::Binary).unwrap();
            let mut rng = SplitMix64::new(900 + trial);
            for _ in 0..3000 {
                if bench.sender.is_done() {
                    break;
                }
                let drop_fwd = rng.next_f64() < 0.12;
                let drop_back = rng.next_f64() < 0.12;
                bench.tick_with(drop_fwd, drop_back);
            }
            assert!(bench.sender.is_done(), "trial {trial} stalled");
            assert_eq!(bench.delivered.len(), 1, "trial {trial}");
            assert_eq!(bench.delivered[0].0, data, "trial {trial}");
        }
    }

    #[test]
    fn static_seeded_loss_grind_is_bit_exact() {
        let cfg = config(HeaderDesign::Static);
        let seg = cfg.segment_bytes().unwrap();
        for trial in 0..10u64 {
            let mut bench = Bench::new(cfg);
            let data = payload(9 * seg + 2, 200 + trial);
            bench.sender.start_request(&data, Format::Binary).unwrap();
            let mut rng = SplitMix64::new(700 + trial);
            for _ in 0..3000 {
                if bench.sender.is_done() {
                    break;
                }
                let drop_fwd = rng.next_f64() < 0.12;
                let drop_back = rng.next_f64() < 0.12;
                bench.tick_with(drop_fwd, drop_back);
            }
            assert!(bench.sender.is_done(), "trial {trial} stalled");
            assert_eq!(bench.delivered.len(), 1, "trial {trial}");
            assert_eq!(bench.delivered[0].0, data, "trial {trial}");
        }
    }

    #[test]
    fn back_to_back_requests_stay_separate() {
        let cfg = config(HeaderDesign::Static);
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        let first = payload(2 * seg, 11);
        let second = payload(3 * seg, 12);
        bench.sender.start_request(&first, Format::Binary).unwrap();
        bench.run_until_done(60);
        bench.sender.start_request(&second, Format::Binary).unwrap();
        bench.run_until_done(200);
        assert_eq!(bench.delivered.len(), 2);
        assert_eq!(bench.delivered[0].0, first);
        assert_eq!(bench.delivered[1].0, second);
    }

    #[test]
    fn resend_limit_aborts_with_notice() {
        let cfg = SessionConfig { resend_limit: 2, ..config(HeaderDesign::Static) };
        let mut bench = Bench::new(cfg);
        let seg = cfg.segment_bytes().unwrap();
        bench.sender.start_request(&payload(seg, 14), Format::Binary).unwrap();
        // Sever the forward path entirely: queries burn the budget.
        for _ in 0..200 {
            bench.tick_with(true, false);
            if bench.sender.is_failed() {
                break;
            }
        }
        assert!(bench.sender.is_failed());
        assert!(
            bench.sender_events.iter().any(|a| matches!(a, EngineAction::Abort(_))),
            "abort was surfaced"
        );
        assert!(bench.delivered.is_empty());
    }

    #[test]
    fn garbage_window_is_notified_not_fatal() {
        let cfg = config(HeaderDesign::Static);
        let mut receiver = SessionEngine::new(cfg, Role::Receiver).unwrap();
        let noise: BitString = "01".parse().unwrap(); // too short for any header
        let actions = receiver.handle_incoming(0, &noise);
        assert!(matches!(&actions[..], [EngineAction::Notify(_)]));
    }

    #[test]
    fn start_request_rejected_for_receiver_and_mid_flight() {
        let cfg = config(HeaderDesign::Static);
        let mut receiver = SessionEngine::new(cfg, Role::Receiver).unwrap();
        assert!(receiver.start_request(&[1], Format::Binary).is_err());
        let mut sender = SessionEngine::new(cfg, Role::Sender).unwrap();
        sender.start_request(&[1], Format::Binary).unwrap();
        assert!(sender.start_request(&[2], Format::Binary).is_err());
    }

    #[test]
    fn burst_bits_match_planner_output() {
        // The engine's first chunked burst and the standalone planner must
        // agree bit for bit (same status updates, same segmentation).
        let cfg = config(HeaderDesign::Dynamic);
        let mut sender = SessionEngine::new(cfg, Role::Sender).unwrap();
        let data = payload(2 * cfg.segment_bytes().unwrap() + 7, 13);
        sender.start_request(&data, Format::Binary).unwrap();
        let mut engine_packets = Vec::new();
        loop {
            let out = sender.next_outgoing().unwrap();
            if out.kind.is_dummy() {
                break;
            }
            engine_packets.push(out.bits);
        }
        let planned = chunks::plan_request_chunks(
            &data,
            cfg.content_capacity_bits(),
            &chunks::PlanOptions {
                version: Some(1),
                format: Some(Format::Binary),
                next_offset: None,
                segment_bytes: None,
            },
        )
        .unwrap();
        assert_eq!(engine_packets, planned);
    }

    #[test]
    fn seq_unwrap_handles_wrap_and_swap() {
        let mut u = SeqUnwrap::default();
        assert_eq!(u.ordinal(0), 0);
        assert_eq!(u.ordinal(1), 1);
        assert_eq!(u.ordinal(3), 3); // one lost
        assert_eq!(u.ordinal(2), 2); // ...then it arrives late
        assert_eq!(u.ordinal(4), 4);

        // A long-lived stream must survive the 16-bit wrap (and several).
        let mut u = SeqUnwrap::default();
        for ordinal in 0..200_000u64 {
            assert_eq!(u.ordinal(ordinal as u16), ordinal, "ordinal {ordinal}");
        }
        // Late packet right at the wrap boundary.
        let mut u = SeqUnwrap::default();
        for ordinal in 0..=65535u64 {
            u.ordinal(ordinal as u16);
        }
        assert_eq!(u.ordinal(1), 65537); // post-wrap
        assert_eq!(u.ordinal(65535), 65535); // pre-wrap straggler
        assert_eq!(u.ordinal(2), 65538);
    }

    #[test]
    fn capacity_validation_catches_tiny_frames() {
        let cfg = SessionConfig { frame_codes: 15, ..config(HeaderDesign::Static) };
        assert!(matches!(
            SessionEngine::new(cfg, Role::Sender),
            Err(Error::Capacity { .. })
        ));
        let cfg = SessionConfig { frame_codes: 16, ..config(HeaderDesign::Static) };
        let mut engine = SessionEngine::new(cfg, Role::Sender).unwrap();
        // Filler fits, transfers do not.
        assert!(engine.next_outgoing().is_ok());
        assert!(matches!(
            engine.start_request(&[1, 2, 3], Format::Binary),
            Err(Error::Capacity { .. })
        ));
    }
}
