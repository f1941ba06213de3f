//! Fixed-layout control headers.
//!
//! Every message is one self-contained header whose layout is fixed by its
//! 2-bit type tag: fields are concatenated MSB-first in a fixed row order,
//! so each variant has a single known width and decoding never reads past
//! it. All four variants share a 5-bit `nho` field announcing the code
//! offset of the header in the *following* packet.

use std::fmt;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Which of the two header families a session speaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeaderDesign {
    /// Fixed-layout headers: one complete header per message.
    Static,
    /// Chunked headers with status-update registers (see [`crate::chunks`]).
    Dynamic,
}

impl fmt::Display for HeaderDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeaderDesign::Static => "static",
            HeaderDesign::Dynamic => "dynamic",
        })
    }
}

impl std::str::FromStr for HeaderDesign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(HeaderDesign::Static),
            "dynamic" => Ok(HeaderDesign::Dynamic),
            other => Err(Error::Argument(format!(
                "unknown header design {other:?} (expected static or dynamic)"
            ))),
        }
    }
}

/// Payload interpretation announced in a transfer request.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Text = 0,
    Binary = 1,
}

/// Receiver verdict carried by a response.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Ok = 0,
    Resend = 1,
}

/// One fixed-layout header. Widths: request 16 bits, data 15, response 9,
/// dummy 16.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StaticHeader {
    /// Opens a transfer: `cnt` data packets will follow.
    Request { nho: u8, fmt: Format, cnt: u8, ver: u8 },
    /// Announces `len` payload bytes carried alongside this header.
    Data { nho: u8, len: u8 },
    /// Acknowledges received data or asks for retransmission.
    Response { nho: u8, cmd: Command },
    /// Keeps the channel occupied with 9 bits of filler.
    Dummy { nho: u8, dmy: u16 },
}

const HT_REQUEST: u64 = 0b00;
const HT_DATA: u64 = 0b01;
const HT_RESPONSE: u64 = 0b10;
const HT_DUMMY: u64 = 0b11;

pub const REQUEST_BITS: usize = 16;
pub const DATA_BITS: usize = 15;
pub const RESPONSE_BITS: usize = 9;
pub const DUMMY_BITS: usize = 16;

/// Widest encoded variant; how much a decoder must buffer to be safe.
pub const MAX_HEADER_BITS: usize = 16;

impl StaticHeader {
    /// Encoded width of this variant in bits.
    pub fn encoded_len(&self) -> usize {
        match self {
            StaticHeader::Request { .. } => REQUEST_BITS,
            StaticHeader::Data { .. } => DATA_BITS,
            StaticHeader::Response { .. } => RESPONSE_BITS,
            StaticHeader::Dummy { .. } => DUMMY_BITS,
        }
    }

    /// The next-header-offset field common to all variants.
    pub fn nho(&self) -> u8 {
        match *self {
            StaticHeader::Request { nho, .. }
            | StaticHeader::Data { nho, .. }
            | StaticHeader::Response { nho, .. }
            | StaticHeader::Dummy { nho, .. } => nho,
        }
    }

    /// Returns a copy with the next-header-offset field replaced.
    pub fn with_nho(mut self, new_nho: u8) -> Self {
        match &mut self {
            StaticHeader::Request { nho, .. }
            | StaticHeader::Data { nho, .. }
            | StaticHeader::Response { nho, .. }
            | StaticHeader::Dummy { nho, .. } => *nho = new_nho,
        }
        self
    }
}

impl fmt::Display for StaticHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StaticHeader::Request { nho, fmt: pf, cnt, ver } => {
                write!(f, "REQ(nho={nho}, fmt={pf:?}, cnt={cnt}, ver={ver:02b})")
            }
            StaticHeader::Data { nho, len } => write!(f, "DAT(nho={nho}, len={len})"),
            StaticHeader::Response { nho, cmd } => write!(f, "RES(nho={nho}, cmd={cmd:?})"),
            StaticHeader::Dummy { nho, dmy } => write!(f, "DMY(nho={nho}, dmy={dmy:#05x})"),
        }
    }
}

fn check_field(field: &'static str, value: u64, width: usize) -> Result<u64> {
    if width < 64 && value >> width != 0 {
        return Err(Error::Encoding { field, value });
    }
    Ok(value)
}

/// Serializes a header MSB-first: type tag, offset, then the variant's
/// remaining fields in layout order.
pub fn encode_static(header: &StaticHeader) -> Result<BitString> {
    let mut bits = BitString::with_capacity(header.encoded_len());
    match *header {
        StaticHeader::Request { nho, fmt, cnt, ver } => {
            if ver == 0 {
                return Err(Error::Encoding { field: "ver", value: 0 });
            }
            bits.push_uint(HT_REQUEST, 2)?;
            bits.push_uint(check_field("nho", nho as u64, 5)?, 5)?;
            bits.push_uint(fmt as u64, 1)?;
            bits.push_uint(check_field("cnt", cnt as u64, 6)?, 6)?;
            bits.push_uint(check_field("ver", ver as u64, 2)?, 2)?;
        }
        StaticHeader::Data { nho, len } => {
            bits.push_uint(HT_DATA, 2)?;
            bits.push_uint(check_field("nho", nho as u64, 5)?, 5)?;
            bits.push_uint(len as u64, 8)?;
        }
        StaticHeader::Response { nho, cmd } => {
            bits.push_uint(HT_RESPONSE, 2)?;
            bits.push_uint(check_field("nho", nho as u64, 5)?, 5)?;
            bits.push_uint(cmd as u64, 2)?;
        }
        StaticHeader::Dummy { nho, dmy } => {
            bits.push_uint(HT_DUMMY, 2)?;
            bits.push_uint(check_field("nho", nho as u64, 5)?, 5)?;
            bits.push_uint(check_field("dmy", dmy as u64, 9)?, 9)?;
        }
    }
    Ok(bits)
}

/// Parses one header from the front of `bits`, returning it together with
/// the number of bits consumed. Trailing bits are left untouched.
pub fn decode_static(bits: &BitString) -> Result<(StaticHeader, usize)> {
    let need = |width: usize| -> Result<()> {
        if bits.len() < width {
            Err(Error::Truncated {
                needed_bits: width,
                available_bits: bits.len(),
            })
        } else {
            Ok(())
        }
    };
    need(2)?;
    let ht = bits.read_uint(0, 2)?;
    let header = match ht {
        HT_REQUEST => {
            need(REQUEST_BITS)?;
            let ver = bits.read_uint(14, 2)? as u8;
            if ver == 0 {
                return Err(Error::Protocol("request carries version 00".into()));
            }
            StaticHeader::Request {
                nho: bits.read_uint(2, 5)? as u8,
                fmt: if bits.read_uint(7, 1)? == 0 { Format::Text } else { Format::Binary },
                cnt: bits.read_uint(8, 6)? as u8,
                ver,
            }
        }
        HT_DATA => {
            need(DATA_BITS)?;
            StaticHeader::Data {
                nho: bits.read_uint(2, 5)? as u8,
                len: bits.read_uint(7, 8)? as u8,
            }
        }
        HT_RESPONSE => {
            need(RESPONSE_BITS)?;
            StaticHeader::Response {
                nho: bits.read_uint(2, 5)? as u8,
                cmd: if bits.read_uint(7, 2)? & 1 == 0 { Command::Ok } else { Command::Resend },
            }
        }
        HT_DUMMY => {
            need(DUMMY_BITS)?;
            StaticHeader::Dummy {
                nho: bits.read_uint(2, 5)? as u8,
                dmy: bits.read_uint(7, 9)? as u16,
            }
        }
        _ => unreachable!("2-bit read"),
    };
    Ok((header, header.encoded_len()))
}
