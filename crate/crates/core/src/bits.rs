//! Growable bit buffer with most-significant-bit-first byte semantics.
//!
//! All wire images in this crate (header elements, hidden payload bits) are
//! sequences of bits. [`BitString`] keeps them in order, converts to and from
//! bytes MSB-first, and [`BitReader`] consumes them front to back with honest
//! truncation errors.

use crate::error::{Error, Result};
use std::fmt;
use std::str::FromStr;

/// Ordered sequence of bits. Bytes map to bits most-significant-first, so
/// `0xA0` becomes `1010 0000` in order.
#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    bits: Vec<bool>,
}

impl BitString {
    pub fn new() -> Self {
        BitString { bits: Vec::new() }
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitString {
            bits: Vec::with_capacity(bits),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    /// `width` may be 0 (appends nothing). Errors if `value` does not fit.
    pub fn push_uint(&mut self, value: u64, width: usize) -> Result<()> {
        debug_assert!(width <= 64);
        if width < 64 && value >= (1u64 << width) {
            return Err(Error::Argument(format!(
                "value {value} does not fit in {width} bits"
            )));
        }
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
        Ok(())
    }

    pub fn extend(&mut self, other: &BitString) {
        self.bits.extend_from_slice(&other.bits);
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.bits.get(index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    /// Reads `width` bits starting at `pos`, most significant first.
    pub fn read_uint(&self, pos: usize, width: usize) -> Result<u64> {
        debug_assert!(width <= 64);
        if pos + width > self.bits.len() {
            return Err(Error::Truncated {
                needed_bits: pos + width,
                available_bits: self.bits.len(),
            });
        }
        let mut v = 0u64;
        for &b in &self.bits[pos..pos + width] {
            v = (v << 1) | b as u64;
        }
        Ok(v)
    }

    /// Bits `start..end` as a new buffer.
    pub fn slice(&self, start: usize, end: usize) -> Result<BitString> {
        if start > end || end > self.bits.len() {
            return Err(Error::Argument(format!(
                "slice {start}..{end} out of range for {} bits",
                self.bits.len()
            )));
        }
        Ok(BitString {
            bits: self.bits[start..end].to_vec(),
        })
    }

    /// Every byte contributes eight bits, most significant first.
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut s = BitString::with_capacity(bytes.len() * 8);
        for &b in bytes {
            for i in (0..8).rev() {
                s.bits.push((b >> i) & 1 == 1);
            }
        }
        s
    }

    /// Packs bits back into bytes MSB-first; a partial trailing byte is
    /// zero-padded on the right.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.bits.len().div_ceil(8));
        for chunk in self.bits.chunks(8) {
            let mut b = 0u8;
            for (i, &bit) in chunk.iter().enumerate() {
                if bit {
                    b |= 1 << (7 - i);
                }
            }
            out.push(b);
        }
        out
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}) \"{}\"", self.len(), self)
    }
}

/// `"0100 1"`-style literals (whitespace and underscores ignored); handy in
/// tests and diagnostics.
impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = BitString::new();
        for c in s.chars() {
            match c {
                '0' => out.push(false),
                '1' => out.push(true),
                ' ' | '_' => {}
                other => {
                    return Err(Error::Argument(format!("invalid bit character {other:?}")));
                }
            }
        }
        Ok(out)
    }
}

/// Front-to-back cursor over a [`BitString`].
pub struct BitReader<'a> {
    bits: &'a BitString,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a BitString) -> Self {
        BitReader { bits, pos: 0 }
    }

    /// Bits consumed so far.
    pub fn consumed(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    /// Consumes `width` bits as an MSB-first unsigned value.
    pub fn take_uint(&mut self, width: usize) -> Result<u64> {
        let v = self.bits.read_uint(self.pos, width)?;
        self.pos += width;
        Ok(v)
    }

    /// Consumes `count` bytes (8·count bits).
    pub fn take_bytes(&mut self, count: usize) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.take_uint(8)? as u8);
        }
        Ok(out)
    }
}
