//! 32-bit range coder over 16-bit cumulative frequencies.
//!
//! Carries are propagated through a cached byte plus a count of pending
//! 0xFF bytes, so the output is a plain big-endian fraction. The leading
//! byte of that fraction is always zero and is not stored; trailing zero
//! bytes are trimmed and re-supplied by the decoder.

use crate::error::{Error, Result};

pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;
const TOP: u32 = 1 << 24;

#[derive(Debug, Clone)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            out: Vec::new(),
        }
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Encodes the interval `[cum, cum + freq)` of a `2^16` total.
    pub fn encode(&mut self, cum: u32, freq: u32) {
        debug_assert!(freq > 0 && cum + freq <= FREQ_TOTAL);
        let r = self.range >> FREQ_BITS;
        self.low += r as u64 * cum as u64;
        self.range = r * freq;
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.pending -= 1;
                if self.pending == 0 {
                    break;
                }
            }
            self.cache = ((self.low >> 24) & 0xFF) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        // Any value in [low, low + range) identifies the stream; pick the
        // one with the most trailing zero bits.
        let mut v = self.low;
        for bits in (0..=32).rev() {
            let mask = (1u64 << bits) - 1;
            let cand = (self.low + mask) & !mask;
            if cand < self.low + self.range as u64 {
                v = cand;
                break;
            }
        }
        self.low = v;
        for _ in 0..5 {
            self.shift_low();
        }
        let mut out = self.out;
        // The first byte is the integer part of the fraction: always 0.
        debug_assert_eq!(out.first(), Some(&0));
        out.remove(0);
        while out.last() == Some(&0) {
            out.pop();
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        let mut d = Self {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            d.code = (d.code << 8) | d.next_byte() as u32;
        }
        d
    }

    fn next_byte(&mut self) -> u8 {
        let b = self.data.get(self.pos).copied().unwrap_or(0);
        self.pos += 1;
        b
    }

    /// Cumulative-frequency target of the next symbol.
    pub fn target(&self) -> Result<u32> {
        let v = self.code / (self.range >> FREQ_BITS);
        if v >= FREQ_TOTAL {
            return Err(Error::CorruptStream("range decoder target out of bounds".into()));
        }
        Ok(v)
    }

    pub fn consume(&mut self, cum: u32, freq: u32) -> Result<()> {
        let r = self.range >> FREQ_BITS;
        self.code -= r * cum;
        self.range = r * freq;
        while self.range < TOP {
            self.code = (self.code << 8) | self.next_byte() as u32;
            self.range <<= 8;
        }
        if self.pos > self.data.len() + 5 {
            return Err(Error::CorruptStream("range decoder ran past the payload".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream() {
        assert!(RangeEncoder::new().finish().is_empty());
    }

    #[test]
    fn two_symbol_round_trip() {
        // freq: A = 1, B = 65535.
        let msg: Vec<bool> = (0..5000).map(|i| i % 97 == 0).collect();
        let mut enc = RangeEncoder::new();
        for &a in &msg {
            if a {
                enc.encode(0, 1);
            } else {
                enc.encode(1, FREQ_TOTAL - 1);
            }
        }
        let bytes = enc.finish();
        let mut dec = RangeDecoder::new(&bytes);
        for &a in &msg {
            let t = dec.target().unwrap();
            let got = t < 1;
            assert_eq!(got, a);
            if got {
                dec.consume(0, 1).unwrap();
            } else {
                dec.consume(1, FREQ_TOTAL - 1).unwrap();
            }
        }
    }
}
