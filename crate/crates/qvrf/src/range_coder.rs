//! Byte-oriented range coder over fixed-point symbol tables.
//!
//! Integer-only arithmetic: a 32-bit range register, a 64-bit low
//! accumulator for carry propagation, byte-wise renormalization. Symbol
//! probabilities come exclusively from prebuilt [`SymbolDistribution`]
//! tables, so an encoder and a decoder fed the same tables stay bit-exact
//! on every platform. Raw ("bypass") bits are coded through the same
//! registers at one bit of stream cost each.
//!
//! The stream starts with one zero byte (the carry anchor) and the final
//! flush emits four more; total framing overhead is 5 bytes, within
//! [`OVERHEAD_BYTES`].

use crate::entropy::{SymbolDistribution, CDF_TOTAL, PRECISION};
use crate::error::{Error, Result};

/// Fixed upper bound on flush/framing overhead, in bytes.
pub const OVERHEAD_BYTES: usize = 8;

const RENORM_LIMIT: u32 = 1 << 24;
const LOW_MASK: u64 = 0xFFFF_FFFF;

/// Result of decoding one symbol: either an in-window value or the escape
/// sentinel, in which case the caller reads the raw value with
/// [`RangeDecoder::decode_raw_bits`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoded {
    Symbol(i32),
    Escape,
}

pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending_ff: u64,
    out: Vec<u8>,
    estimated_bits: f64,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending_ff: 0,
            out: Vec::new(),
            estimated_bits: 0.0,
        }
    }

    /// Codes symbol `k` under `dist`. Symbols outside the table window are
    /// coded as the escape slot; the caller is responsible for following up
    /// with the raw value via [`encode_raw_bits`](Self::encode_raw_bits).
    pub fn encode_symbol(&mut self, dist: &SymbolDistribution, k: i32) {
        let slot = dist.slot_of(k);
        self.encode_slot(dist, slot);
    }

    /// Codes the escape slot of `dist`.
    pub fn encode_escape(&mut self, dist: &SymbolDistribution) {
        self.encode_slot(dist, dist.escape_slot());
    }

    fn encode_slot(&mut self, dist: &SymbolDistribution, slot: usize) {
        let (cum, freq) = dist.slot_bounds(slot);
        debug_assert!(freq >= 1);
        let r = self.range >> PRECISION;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        self.renormalize();
        self.estimated_bits += -(freq as f64 / CDF_TOTAL as f64).log2();
    }

    /// Writes the low `n_bits` of `value` at one bit of stream cost each.
    /// `n_bits` must be at most 32 and `value` must fit in `n_bits`.
    pub fn encode_raw_bits(&mut self, value: u32, n_bits: u32) {
        assert!(n_bits <= 32);
        assert!(
            n_bits == 32 || value >> n_bits == 0,
            "value wider than n_bits"
        );
        for i in (0..n_bits).rev() {
            let bit = (value >> i) & 1;
            let half = self.range >> 1;
            if bit == 1 {
                self.low += half as u64;
                self.range -= half;
            } else {
                self.range = half;
            }
            self.renormalize();
        }
        self.estimated_bits += n_bits as f64;
    }

    fn renormalize(&mut self) {
        while self.range < RENORM_LIMIT {
            self.shift_low();
            self.range <<= 8;
        }
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low > LOW_MASK {
            let carry = (self.low >> 32) as u8;
            self.out.push(self.cache.wrapping_add(carry));
            while self.pending_ff > 0 {
                self.out.push(0xFFu8.wrapping_add(carry));
                self.pending_ff -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        } else {
            self.pending_ff += 1;
        }
        self.low = (self.low << 8) & LOW_MASK;
    }

    /// Flushes the registers and returns the finished byte stream.
    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }

    /// Ideal cost accumulated so far: the sum of `-log2(mass / 2^PRECISION)`
    /// over coded slots plus one bit per raw bit.
    pub fn estimated_bits(&self) -> f64 {
        self.estimated_bits
    }
}

pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> RangeDecoder<'a> {
    /// Primes the decoder from a stream produced by [`RangeEncoder`].
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut dec = Self {
            data,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        dec.read_byte()?; // carry anchor
        for _ in 0..4 {
            dec.code = (dec.code << 8) | dec.read_byte()? as u32;
        }
        Ok(dec)
    }

    fn read_byte(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or(Error::StreamExhausted)?;
        self.pos += 1;
        Ok(b)
    }

    /// Decodes one symbol under `dist`.
    pub fn decode_symbol(&mut self, dist: &SymbolDistribution) -> Result<Decoded> {
        let r = self.range >> PRECISION;
        let cum = (self.code / r).min(CDF_TOTAL - 1);
        let slot = dist.slot_for_cum(cum);
        let (cum_lo, freq) = dist.slot_bounds(slot);
        self.code -= r * cum_lo;
        self.range = r * freq;
        self.renormalize()?;
        if slot == dist.escape_slot() {
            Ok(Decoded::Escape)
        } else {
            Ok(Decoded::Symbol(dist.k_min() + slot as i32))
        }
    }

    /// Reads back `n_bits` raw bits written by `encode_raw_bits`.
    pub fn decode_raw_bits(&mut self, n_bits: u32) -> Result<u32> {
        assert!(n_bits <= 32);
        let mut value = 0u32;
        for _ in 0..n_bits {
            let half = self.range >> 1;
            let bit = if self.code >= half {
                self.code -= half;
                self.range -= half;
                1
            } else {
                self.range = half;
                0
            };
            value = (value << 1) | bit;
            self.renormalize()?;
        }
        Ok(value)
    }

    fn renormalize(&mut self) -> Result<()> {
        while self.range < RENORM_LIMIT {
            self.code = (self.code << 8) | self.read_byte()? as u32;
            self.range <<= 8;
        }
        Ok(())
    }
}

/// Maps a signed symbol to the unsigned raw-bit payload used after an
/// escape: 0, -1, 1, -2, ... -> 0, 1, 2, 3, ...
pub fn zigzag(k: i32) -> u32 {
    ((k << 1) ^ (k >> 31)) as u32
}

pub fn unzigzag(v: u32) -> i32 {
    ((v >> 1) as i32) ^ -((v & 1) as i32)
}
