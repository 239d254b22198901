//! Per-frame bitstream framing.
//!
//! ```text
//! magic "CPRZ" | version u8 | scheme u8 | scenario u8 | N′ u16 BE | N_t u16 BE | Q_s u8
//! [symbols per channel u32 BE | rate or layer index u8]   (schemes 4 and 5)
//! b_t: N_t × Q_s bits, MSB-first, zero-padded to a byte
//! b_s: payload bytes
//! ```
//!
//! Streams of many frames are stored as a sequence of `u32 BE length ‖
//! bitstream` records.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::{BitReader, BitWriter, Payload};
use crate::error::{Error, Result};
use crate::scaling::{read_factors, write_factors, ScalingConfig};
use crate::signal::Scenario;

pub const MAGIC: &[u8; 4] = b"CPRZ";
pub const VERSION: u8 = 1;
/// Rate index of a single-rate neural model.
pub const SINGLE_RATE: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeId {
    /// Lloyd-Max scalar quantizer, fixed rate.
    ClassicalScalar,
    /// Vector quantizer with Huffman-coded indices.
    ClassicalVector,
    LatentUniform,
    LatentVq,
    Neural,
    Refinement,
    /// Vector quantizer with fixed-length indices.
    ClassicalVectorFixed,
}

impl SchemeId {
    pub fn code(self) -> u8 {
        match self {
            SchemeId::ClassicalScalar => 0,
            SchemeId::ClassicalVector => 1,
            SchemeId::LatentUniform => 2,
            SchemeId::LatentVq => 3,
            SchemeId::Neural => 4,
            SchemeId::Refinement => 5,
            SchemeId::ClassicalVectorFixed => 6,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        Ok(match c {
            0 => SchemeId::ClassicalScalar,
            1 => SchemeId::ClassicalVector,
            2 => SchemeId::LatentUniform,
            3 => SchemeId::LatentVq,
            4 => SchemeId::Neural,
            5 => SchemeId::Refinement,
            6 => SchemeId::ClassicalVectorFixed,
            _ => return Err(Error::Format(format!("unknown scheme id {c}"))),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::ClassicalScalar => "classical-scalar",
            SchemeId::ClassicalVector => "classical-vector",
            SchemeId::LatentUniform => "latent-uniform",
            SchemeId::LatentVq => "latent-vq",
            SchemeId::Neural => "neural",
            SchemeId::Refinement => "refinement",
            SchemeId::ClassicalVectorFixed => "classical-vector-fixed",
        }
    }

    /// Whether the header carries a symbol count and an index byte.
    pub fn has_extension(self) -> bool {
        matches!(self, SchemeId::Neural | SchemeId::Refinement)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub scheme: SchemeId,
    pub scenario: Scenario,
    pub n_prime: u16,
    pub n_t: u16,
    pub q_s: u8,
    /// Symbols per latent channel and the rate (scheme 4) or layer
    /// (scheme 5) index.
    pub extension: Option<(u32, u8)>,
}

impl Header {
    pub fn byte_len(&self) -> usize {
        12 + if self.extension.is_some() { 5 } else { 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub header: Header,
    pub t: Vec<u32>,
    pub payload: Payload,
}

impl Bitstream {
    /// Bits after the header, without byte padding: `N_t·Q_s` plus the
    /// exact payload length.
    pub fn measured_bits(&self) -> usize {
        self.header.n_t as usize * self.header.q_s as usize + self.payload.bit_len
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let h = &self.header;
        if h.scheme.has_extension() != h.extension.is_some() {
            return Err(Error::Format(format!("header extension does not match scheme {}", h.scheme.name())));
        }
        if self.t.len() != h.n_t as usize {
            return Err(Error::InputShape(format!("{} scaling factors, header says {}", self.t.len(), h.n_t)));
        }
        let mut out = Vec::with_capacity(h.byte_len() + self.payload.bytes.len() + self.t.len() * 2);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(h.scheme.code());
        out.push(h.scenario.code());
        out.extend_from_slice(&h.n_prime.to_be_bytes());
        out.extend_from_slice(&h.n_t.to_be_bytes());
        out.push(h.q_s);
        if let Some((count, index)) = h.extension {
            out.extend_from_slice(&count.to_be_bytes());
            out.push(index);
        }
        let cfg = ScalingConfig::new(1, h.q_s as u32)?;
        let mut w = BitWriter::new();
        write_factors(&mut w, &self.t, &cfg)?;
        out.extend(w.into_bytes());
        out.extend_from_slice(&self.payload.bytes);
        Ok(out)
    }

    /// Parses one bitstream. The payload length is taken as all remaining
    /// bytes; fixed-rate decoders know their exact bit count.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a CPRZ bitstream".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("bitstream version {} is not supported (expected {VERSION})", bytes[4])));
        }
        let scheme = SchemeId::from_code(bytes[5])?;
        let scenario = Scenario::from_code(bytes[6])?;
        let n_prime = u16::from_be_bytes([bytes[7], bytes[8]]);
        let n_t = u16::from_be_bytes([bytes[9], bytes[10]]);
        let q_s = bytes[11];
        let mut pos = 12;
        let extension = if scheme.has_extension() {
            let ext = bytes
                .get(12..17)
                .ok_or_else(|| Error::Format("truncated bitstream header".into()))?;
            pos = 17;
            Some((u32::from_be_bytes([ext[0], ext[1], ext[2], ext[3]]), ext[4]))
        } else {
            None
        };
        if q_s == 0 || q_s > 32 {
            return Err(Error::Format(format!("invalid Q_s {q_s}")));
        }
        let t_bytes = (n_t as usize * q_s as usize).div_ceil(8);
        let seg = bytes
            .get(pos..pos + t_bytes)
            .ok_or_else(|| Error::Format("truncated scaling-factor segment".into()))?;
        let cfg = ScalingConfig::new(1, q_s as u32)?;
        let t = read_factors(&mut BitReader::new(seg), n_t as usize, &cfg)?;
        let payload = bytes[pos + t_bytes..].to_vec();
        Ok(Self {
            header: Header {
                scheme,
                scenario,
                n_prime,
                n_t,
                q_s,
                extension,
            },
            t,
            payload: Payload {
                bit_len: payload.len() * 8,
                bytes: payload,
            },
        })
    }
}

/// Concatenates length-prefixed records.
pub fn write_records(records: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        out.extend_from_slice(&(r.len() as u32).to_be_bytes());
        out.extend_from_slice(r);
    }
    out
}

pub fn read_records(bytes: &[u8]) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let len = bytes
            .get(pos..pos + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| Error::Format("truncated record length".into()))?;
        let rec = bytes
            .get(pos + 4..pos + 4 + len)
            .ok_or_else(|| Error::Format("truncated record".into()))?;
        out.push(rec.to_vec());
        pos += 4 + len;
    }
    Ok(out)
}

pub fn save_records(path: &Path, records: &[Vec<u8>]) -> Result<()> {
    std::fs::write(path, write_records(records)).map_err(|e| Error::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<Vec<u8>>> {
    read_records(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(scheme: SchemeId) -> Bitstream {
        Bitstream {
            header: Header {
                scheme,
                scenario: Scenario::Uplink,
                n_prime: 360,
                n_t: 3,
                q_s: 8,
                extension: scheme.has_extension().then_some((360, 2)),
            },
            t: vec![1, 200, 255],
            payload: Payload {
                bytes: vec![0xAB, 0xCD, 0x01],
                bit_len: 24,
            },
        }
    }

    #[test]
    fn round_trip_every_scheme() {
        for c in 0..7 {
            let s = sample(SchemeId::from_code(c).unwrap());
            let bytes = s.to_bytes().unwrap();
            assert_eq!(bytes.len(), s.header.byte_len() + 3 + 3);
            assert_eq!(Bitstream::from_bytes(&bytes).unwrap(), s);
        }
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        let mut bytes = sample(SchemeId::LatentVq).to_bytes().unwrap();
        bytes[4] = 2;
        assert!(matches!(Bitstream::from_bytes(&bytes), Err(Error::Format(_))));
        bytes[0] = b'X';
        assert!(matches!(Bitstream::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn header_is_big_endian() {
        let bytes = sample(SchemeId::Neural).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"CPRZ");
        assert_eq!(&bytes[7..9], &[0x01, 0x68]);
        assert_eq!(&bytes[12..17], &[0, 0, 0x01, 0x68, 2]);
    }

    proptest! {
        #[test]
        fn records_round_trip(recs in proptest::collection::vec(proptest::collection::vec(any::<u8>(), 0..40), 0..8)) {
            prop_assert_eq!(read_records(&write_records(&recs)).unwrap(), recs);
        }
    }
}
