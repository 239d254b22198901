//! MSB-first bit packing used by every fixed-rate payload and by the
//! scaling-factor segment of the bitstream.

use crate::error::{Error, Result};

#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bit_len: usize,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn write(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        for i in (0..width).rev() {
            self.push_bit((value >> i) & 1 == 1);
        }
    }

    pub fn push_bit(&mut self, bit: bool) {
        let byte = self.bit_len / 8;
        if byte == self.bytes.len() {
            self.bytes.push(0);
        }
        if bit {
            self.bytes[byte] |= 0x80 >> (self.bit_len % 8);
        }
        self.bit_len += 1;
    }

    /// Number of bits written so far (excluding padding).
    pub fn bit_len(&self) -> usize {
        self.bit_len
    }

    /// Returns the packed bytes; the final byte is zero-padded.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn into_payload(self) -> Payload {
        Payload {
            bit_len: self.bit_len,
            bytes: self.bytes,
        }
    }
}

/// Packed bits with their exact length.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Payload {
    pub bytes: Vec<u8>,
    pub bit_len: usize,
}

impl Payload {
    pub fn reader(&self) -> BitReader<'_> {
        BitReader::new(&self.bytes)
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn read_bit(&mut self) -> Result<bool> {
        let byte = self
            .bytes
            .get(self.pos / 8)
            .ok_or_else(|| Error::CorruptStream("bit reader ran past end of payload".into()))?;
        let bit = (byte >> (7 - self.pos % 8)) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read(&mut self, width: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()? as u64;
        }
        Ok(v)
    }

    pub fn position(&self) -> usize {
        self.pos
    }
}
