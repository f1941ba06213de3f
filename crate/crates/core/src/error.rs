//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Error`]. Variants carry
//! enough structure for callers to react programmatically (capacity shortfalls
//! report exact bit counts, segmentation overflows report the limit) while the
//! `Display` impl stays readable for CLI surfaces.

use std::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Underlying I/O failure (file or socket).
    Io(std::io::Error),
    /// Malformed container or wire data (bad RIFF structure, bad RTP header...).
    Format(String),
    /// Well-formed input that this implementation does not handle
    /// (compressed WAV, unknown bit depth, LSB6 on a 4-bit codec...).
    Unsupported(String),
    /// Caller passed an invalid argument (empty stream, zero sample rate,
    /// mismatched lengths, codec mismatch...).
    Argument(String),
    /// Cover stream too small for the requested embedding.
    Capacity {
        needed_bits: usize,
        available_bits: usize,
    },
    /// Bit buffer ended before a complete header element could be read.
    Truncated {
        needed_bits: usize,
        available_bits: usize,
    },
    /// A header field value does not fit its wire width; names the field.
    Encoding { field: &'static str, value: u64 },
    /// Protocol-level violation (reserved version, DAT without LEN, desync...).
    Protocol(String),
    /// Payload needs more data segments than one request can carry; split the
    /// payload across `max`-segment requests.
    Segmentation { segments: usize, max: usize },
    /// Packets from more than one synchronization source in one stream.
    StreamConfusion { expected: u32, got: u32 },
    /// Peer or in-memory channel is gone.
    ChannelClosed,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io(e) => write!(f, "i/o error: {e}"),
            Error::Format(msg) => write!(f, "malformed data: {msg}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::Argument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Capacity {
                needed_bits,
                available_bits,
            } => write!(
                f,
                "capacity shortfall: need {needed_bits} hidden bits, cover offers {available_bits} \
                 (short by {})",
                needed_bits.saturating_sub(*available_bits)
            ),
            Error::Truncated {
                needed_bits,
                available_bits,
            } => write!(
                f,
                "truncated element: need {needed_bits} bits, only {available_bits} present"
            ),
            Error::Encoding { field, value } => {
                write!(f, "field `{field}` value {value} exceeds its wire width")
            }
            Error::Protocol(msg) => write!(f, "protocol violation: {msg}"),
            Error::Segmentation { segments, max } => write!(
                f,
                "payload needs {segments} data segments but one request carries at most {max}; \
                 split the payload across multiple requests"
            ),
            Error::StreamConfusion { expected, got } => write!(
                f,
                "mixed streams: expected ssrc {expected:#010x}, got {got:#010x}"
            ),
            Error::ChannelClosed => write!(f, "channel closed"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
