//! Chunked control headers.
//!
//! Where [`crate::header`] ships one fixed-layout header per message, this
//! encoding splits the same information into small tagged chunks: a 3-bit
//! type followed by a type-specific value. Session-wide attributes (payload
//! length, format, version, next offset) travel as *status updates* — sent
//! only when they change, remembered in a [`DecodeContext`] on the receiving
//! side. That makes short exchanges cheaper and long ones denser, at the
//! price of stateful decoding.

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::header::{Command, Format};

/// Chunk type tags (3 bits each).
const HT_REQ: u64 = 0b000;
const HT_RES: u64 = 0b001;
const HT_DMY: u64 = 0b010;
const HT_DAT: u64 = 0b011;
const HT_LEN: u64 = 0b100;
const HT_NHO: u64 = 0b101;
const HT_FMT: u64 = 0b110;
const HT_VER: u64 = 0b111;

/// Encoded size of each fixed-width chunk, tag included.
pub const REQ_CHUNK_BITS: usize = 4;
pub const RES_CHUNK_BITS: usize = 5;
pub const DMY_CHUNK_BITS: usize = 12;
pub const LEN_CHUNK_BITS: usize = 11;
pub const NHO_CHUNK_BITS: usize = 8;
pub const FMT_CHUNK_BITS: usize = 4;
pub const VER_CHUNK_BITS: usize = 5;

/// Tag-only overhead of a data chunk; its value rides behind it.
pub const DAT_TAG_BITS: usize = 3;

/// One tagged chunk of the dynamic encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DynChunk {
    /// Message bracket: `eom == false` opens a message, `true` closes it.
    Req { eom: bool },
    /// Receiver verdict, same command space as the fixed-layout response.
    Res { cmd: Command },
    /// 9 bits of filler.
    Dmy { dmy: u16 },
    /// Payload bytes; their count must match the last announced length.
    Dat { bytes: Vec<u8> },
    /// Status update: byte length of the data chunks that follow.
    Len { bytes: u8 },
    /// Status update: code offset of the header in the following packet.
    Nho { offset: u8 },
    /// Status update: payload format.
    Fmt { fmt: Format },
    /// Status update: protocol version.
    Ver { ver: u8 },
}

impl DynChunk {
    /// Encoded width in bits, tag included.
    pub fn encoded_len(&self) -> usize {
        match self {
            DynChunk::Req { .. } => REQ_CHUNK_BITS,
            DynChunk::Res { .. } => RES_CHUNK_BITS,
            DynChunk::Dmy { .. } => DMY_CHUNK_BITS,
            DynChunk::Dat { bytes } => DAT_TAG_BITS + 8 * bytes.len(),
            DynChunk::Len { .. } => LEN_CHUNK_BITS,
            DynChunk::Nho { .. } => NHO_CHUNK_BITS,
            DynChunk::Fmt { .. } => FMT_CHUNK_BITS,
            DynChunk::Ver { .. } => VER_CHUNK_BITS,
        }
    }
}

/// Receiver-side registers persisted across packets. Status-update chunks
/// overwrite exactly one register; every other chunk leaves all of them
/// untouched.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DecodeContext {
    pub active_len_bytes: Option<u8>,
    pub version: Option<u8>,
    pub format: Option<Format>,
    pub next_offset_codes: Option<u8>,
}

/// Serializes one chunk: 3-bit tag, then the value, MSB-first.
pub fn encode_chunk(chunk: &DynChunk) -> Result<BitString> {
    let mut bits = BitString::with_capacity(chunk.encoded_len());
    match chunk {
        DynChunk::Req { eom } => {
            bits.push_uint(HT_REQ, 3)?;
            bits.push(*eom);
        }
        DynChunk::Res { cmd } => {
            bits.push_uint(HT_RES, 3)?;
            bits.push_uint(*cmd as u64, 2)?;
        }
        DynChunk::Dmy { dmy } => {
            bits.push_uint(HT_DMY, 3)?;
            if *dmy >= 512 {
                return Err(Error::Encoding { field: "dmy", value: *dmy as u64 });
            }
            bits.push_uint(*dmy as u64, 9)?;
        }
        DynChunk::Dat { bytes } => {
            bits.push_uint(HT_DAT, 3)?;
            for &b in bytes {
                bits.push_uint(b as u64, 8)?;
            }
        }
        DynChunk::Len { bytes } => {
            bits.push_uint(HT_LEN, 3)?;
            bits.push_uint(*bytes as u64, 8)?;
        }
        DynChunk::Nho { offset } => {
            bits.push_uint(HT_NHO, 3)?;
            if *offset >= 32 {
                return Err(Error::Encoding { field: "nho", value: *offset as u64 });
            }
            bits.push_uint(*offset as u64, 5)?;
        }
        DynChunk::Fmt { fmt } => {
            bits.push_uint(HT_FMT, 3)?;
            bits.push_uint(*fmt as u64, 1)?;
        }
        DynChunk::Ver { ver } => {
            bits.push_uint(HT_VER, 3)?;
            if *ver >= 4 {
                return Err(Error::Encoding { field: "ver", value: *ver as u64 });
            }
            bits.push_uint(*ver as u64, 2)?;
        }
    }
    Ok(bits)
}

/// Parses one chunk from position `pos` of `bits` under `ctx`, returning the
/// chunk, the updated context, and the bits consumed.
pub fn decode_chunk_at(
    bits: &BitString,
    pos: usize,
    ctx: &DecodeContext,
) -> Result<(DynChunk, DecodeContext, usize)> {
    let avail = bits.len().saturating_sub(pos);
    let need = |width: usize| -> Result<()> {
        if avail < width {
            Err(Error::Truncated {
                needed_bits: width,
                available_bits: avail,
            })
        } else {
            Ok(())
        }
    };
    need(3)?;
    let ht = bits.read_uint(pos, 3)?;
    let mut new_ctx = *ctx;
    let chunk = match ht {
        HT_REQ => {
            need(REQ_CHUNK_BITS)?;
            DynChunk::Req { eom: bits.read_uint(pos + 3, 1)? == 1 }
        }
        HT_RES => {
            need(RES_CHUNK_BITS)?;
            let cmd = if bits.read_uint(pos + 3, 2)? & 1 == 0 {
                Command::Ok
            } else {
                Command::Resend
            };
            DynChunk::Res { cmd }
        }
        HT_DMY => {
            need(DMY_CHUNK_BITS)?;
            DynChunk::Dmy { dmy: bits.read_uint(pos + 3, 9)? as u16 }
        }
        HT_DAT => {
            let len = match ctx.active_len_bytes {
                Some(len) => len as usize,
                None => {
                    return Err(Error::Protocol(
                        "data chunk arrived with no announced length".into(),
                    ))
                }
            };
            need(DAT_TAG_BITS + 8 * len)?;
            let mut bytes = Vec::with_capacity(len);
            for i in 0..len {
                bytes.push(bits.read_uint(pos + 3 + 8 * i, 8)? as u8);
            }
            DynChunk::Dat { bytes }
        }
        HT_LEN => {
            need(LEN_CHUNK_BITS)?;
            let bytes = bits.read_uint(pos + 3, 8)? as u8;
            new_ctx.active_len_bytes = Some(bytes);
            DynChunk::Len { bytes }
        }
        HT_NHO => {
            need(NHO_CHUNK_BITS)?;
            let offset = bits.read_uint(pos + 3, 5)? as u8;
            new_ctx.next_offset_codes = Some(offset);
            DynChunk::Nho { offset }
        }
        HT_FMT => {
            need(FMT_CHUNK_BITS)?;
            let fmt = if bits.read_uint(pos + 3, 1)? == 0 {
                Format::Text
            } else {
                Format::Binary
            };
            new_ctx.format = Some(fmt);
            DynChunk::Fmt { fmt }
        }
        HT_VER => {
            need(VER_CHUNK_BITS)?;
            let ver = bits.read_uint(pos + 3, 2)? as u8;
            new_ctx.version = Some(ver);
            DynChunk::Ver { ver }
        }
        _ => unreachable!("3-bit read"),
    };
    let consumed = chunk.encoded_len();
    Ok((chunk, new_ctx, consumed))
}

/// [`decode_chunk_at`] from the front of `bits`.
pub fn decode_chunk(
    bits: &BitString,
    ctx: &DecodeContext,
) -> Result<(DynChunk, DecodeContext, usize)> {
    decode_chunk_at(bits, 0, ctx)
}

/// Which optional status updates a request plan announces up front.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlanOptions {
    pub version: Option<u8>,
    pub format: Option<Format>,
    pub next_offset: Option<u8>,
    /// Force a segment size instead of filling each data packet to capacity.
    pub segment_bytes: Option<u8>,
}

/// Smallest per-packet capacity the planner accepts: enough for any
/// fixed-width chunk (the 12-bit filler chunk is the widest).
pub const MIN_PLAN_CAPACITY_BITS: usize = 12;

/// Lays out a complete request as one chunk per packet: an opening bracket,
/// the requested status updates, a (length, data) chunk pair per payload
/// segment, and a closing bracket. Segments never exceed 255 bytes or the
/// per-packet capacity.
pub fn plan_request_chunks(
    payload: &[u8],
    per_packet_capacity_bits: usize,
    opts: &PlanOptions,
) -> Result<Vec<BitString>> {
    if per_packet_capacity_bits < MIN_PLAN_CAPACITY_BITS {
        return Err(Error::Capacity {
            needed_bits: MIN_PLAN_CAPACITY_BITS,
            available_bits: per_packet_capacity_bits,
        });
    }
    let cap_segment = (per_packet_capacity_bits - DAT_TAG_BITS) / 8;
    let segment = match opts.segment_bytes {
        Some(forced) => {
            let forced = forced as usize;
            if forced == 0 {
                return Err(Error::Argument("segment size must be positive".into()));
            }
            if forced > cap_segment {
                return Err(Error::Capacity {
                    needed_bits: DAT_TAG_BITS + 8 * forced,
                    available_bits: per_packet_capacity_bits,
                });
            }
            forced
        }
        None => cap_segment.min(255),
    };

    let mut packets = Vec::new();
    let mut put = |chunk: &DynChunk| -> Result<()> {
        packets.push(encode_chunk(chunk)?);
        Ok(())
    };
    put(&DynChunk::Req { eom: false })?;
    if let Some(ver) = opts.version {
        put(&DynChunk::Ver { ver })?;
    }
    if let Some(fmt) = opts.format {
        put(&DynChunk::Fmt { fmt })?;
    }
    if let Some(offset) = opts.next_offset {
        put(&DynChunk::Nho { offset })?;
    }
    for seg in payload.chunks(segment) {
        put(&DynChunk::Len { bytes: seg.len() as u8 })?;
        put(&DynChunk::Dat { bytes: seg.to_vec() })?;
    }
    put(&DynChunk::Req { eom: true })?;
    Ok(packets)
}
