//! Small deterministic generators.
//!
//! Everything random in this crate — dummy header filler, simulated packet
//! loss, hidden-bit placement offsets, synthesized covers — must replay
//! bit-exactly from a seed, so we keep two tiny generators here instead of
//! pulling in an external RNG whose output could shift between versions.

/// SplitMix64: fast, well-mixed, and stable. Good enough for simulation
/// decisions and filler bits; not a cryptographic generator.
#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [0, bound). `bound` must be non-zero.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        // Multiply-shift reduction; bias is negligible for simulation bounds.
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// `count` random bits.
    pub fn next_bits(&mut self, count: usize) -> crate::bits::BitString {
        let mut out = crate::bits::BitString::with_capacity(count);
        for _ in 0..count {
            out.push(self.next_u64() & 1 == 1);
        }
        out
    }

    /// `count` random bytes.
    pub fn next_bytes(&mut self, count: usize) -> Vec<u8> {
        (0..count).map(|_| self.next_u64() as u8).collect()
    }
}

/// Linear congruential sequence (MMIX multiplier) driving the code-unit
/// offset at which each packet's hidden bits start. Indexed by absolute
/// packet sequence number, so both endpoints stay aligned even across lost
/// packets.
#[derive(Clone, Copy, Debug)]
pub struct OffsetSchedule {
    seed: u64,
}

/// Offsets fit the 5-bit NHO header field: always in 0..=31.
pub const MAX_OFFSET_CODES: usize = 31;

impl OffsetSchedule {
    pub fn new(seed: u64) -> Self {
        OffsetSchedule { seed }
    }

    /// Offset (in code units) for the packet with the given sequence index.
    pub fn offset_at(&self, index: u64) -> usize {
        // O(1) random access via LCG jump-ahead over small exponents would be
        // overkill: iterate. Indexes in a session stay small; hot paths cache.
        let mut x = self.seed.wrapping_mul(0x5851_F42D_4C95_7F2D).wrapping_add(1);
        let mut i = 0;
        while i < index {
            x = x
                .wrapping_mul(0x5851_F42D_4C95_7F2D)
                .wrapping_add(0x1405_7B7E_F767_814F);
            i += 1;
        }
        ((x >> 33) % 32) as usize
    }
}
