//! Flat binary frame container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "CPRF" | version u8 | scenario u8 | mod_order u16
//! n_fft u32 | n_sym u32 | n_cp u32 | frame_count u32 | frame_len u32
//! sample_bytes u8 (4 or 8)
//! frame_count × frame_len × (re, im) as f32 or f64
//! ```
//!
//! Generated datasets are stored as f32. Decoder output is stored as f64 so
//! that file round trips are exact. Downlink frames may carry their cyclic
//! prefix (`n_fft + n_cp` samples), as decoder output does.

use std::fs;
use std::path::Path;

use num_complex::Complex64;

use super::{FrameSpec, Scenario};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CPRF";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 1 + 2 + 4 * 5 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    F32,
    F64,
}

impl SampleFormat {
    fn bytes(self) -> usize {
        match self {
            SampleFormat::F32 => 4,
            SampleFormat::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub spec: FrameSpec,
    pub frames: Vec<Vec<Complex64>>,
}

/// Frame lengths a container may hold for `spec`.
fn allowed_len(spec: &FrameSpec, len: usize) -> bool {
    len == spec.frame_len() || (spec.scenario == Scenario::Downlink && len == spec.n_fft + spec.n_cp)
}

impl FrameSet {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.to_bytes_as(SampleFormat::F32)
    }

    pub fn to_bytes_as(&self, format: SampleFormat) -> Result<Vec<u8>> {
        let len = self.frames.first().map_or(self.spec.frame_len(), Vec::len);
        if !allowed_len(&self.spec, len) || self.frames.iter().any(|f| f.len() != len) {
            return Err(Error::InputShape(format!(
                "all frames must have {} samples",
                self.spec.frame_len()
            )));
        }
        let w = format.bytes();
        let mut out = Vec::with_capacity(HEADER_LEN + self.frames.len() * len * 2 * w);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(self.spec.scenario.code());
        out.extend_from_slice(&(self.spec.mod_order as u16).to_le_bytes());
        for v in [
            self.spec.n_fft,
            self.spec.n_sym,
            self.spec.n_cp,
            self.frames.len(),
            len,
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.push(w as u8);
        for f in &self.frames {
            for c in f {
                match format {
                    SampleFormat::F32 => {
                        out.extend_from_slice(&(c.re as f32).to_le_bytes());
                        out.extend_from_slice(&(c.im as f32).to_le_bytes());
                    }
                    SampleFormat::F64 => {
                        out.extend_from_slice(&c.re.to_le_bytes());
                        out.extend_from_slice(&c.im.to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a CPRF frame container".into()));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported CPRF version {}", bytes[4])));
        }
        let scenario = Scenario::from_code(bytes[5])?;
        let mod_order = u16::from_le_bytes([bytes[6], bytes[7]]) as u32;
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let (n_fft, n_sym, n_cp, count, len) = (word(0), word(1), word(2), word(3), word(4));
        let spec = FrameSpec::new(scenario, n_fft, n_sym, n_cp, mod_order)?;
        if !allowed_len(&spec, len) {
            return Err(Error::Format(format!(
                "frame length {len} inconsistent with spec ({})",
                spec.frame_len()
            )));
        }
        let w = match bytes[HEADER_LEN - 1] {
            4 => 4,
            8 => 8,
            b => return Err(Error::Format(format!("unsupported sample width {b}"))),
        };
        let body = &bytes[HEADER_LEN..];
        if body.len() != count * len * 2 * w {
            return Err(Error::Format(format!(
                "expected {} sample bytes, found {}",
                count * len * 2 * w,
                body.len()
            )));
        }
        let at = |o: usize| -> f64 {
            if w == 4 {
                f32::from_le_bytes(body[o..o + 4].try_into().unwrap()) as f64
            } else {
                f64::from_le_bytes(body[o..o + 8].try_into().unwrap())
            }
        };
        let frames = (0..count)
            .map(|i| {
                (0..len)
                    .map(|j| {
                        let o = (i * len + j) * 2 * w;
                        Complex64::new(at(o), at(o + w))
                    })
                    .collect()
            })
            .collect();
        Ok(Self { spec, frames })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.save_as(path, SampleFormat::F32)
    }

    pub fn save_as(&self, path: &Path, format: SampleFormat) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        fs::write(path, self.to_bytes_as(format)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Rounds every sample to the f32 precision of the container.
    pub fn quantize_to_storage(&mut self) {
        for f in &mut self.frames {
            for c in f.iter_mut() {
                *c = Complex64::new(c.re as f32 as f64, c.im as f32 as f64);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_header() {
        let spec = FrameSpec::new(Scenario::Uplink, 16, 8, 4, 16).unwrap();
        let frames: Vec<Vec<Complex64>> = (0..3)
            .map(|i| (0..20).map(|j| Complex64::new(i as f64 + 0.5, -(j as f64))).collect())
            .collect();
        let set = FrameSet { spec, frames };
        let bytes = set.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"CPRF");
        assert_eq!(bytes.len(), HEADER_LEN + 3 * 20 * 8);
        assert_eq!(bytes[HEADER_LEN - 1], 4);
        assert_eq!(FrameSet::from_bytes(&bytes).unwrap(), set);
    }

    #[test]
    fn f64_is_exact_and_prefixed_downlink_frames_are_accepted() {
        let spec = FrameSpec::new(Scenario::Downlink, 16, 8, 4, 4).unwrap();
        let frames = vec![(0..20).map(|j| Complex64::new(0.1 * j as f64, 1.0 / 3.0)).collect()];
        let set = FrameSet { spec, frames };
        let bytes = set.to_bytes_as(SampleFormat::F64).unwrap();
        assert_eq!(FrameSet::from_bytes(&bytes).unwrap(), set);
        let mut odd = set.clone();
        odd.frames[0].pop();
        assert!(odd.to_bytes().is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(FrameSet::from_bytes(b"nope").is_err());
        let spec = FrameSpec::new(Scenario::Downlink, 16, 8, 4, 4).unwrap();
        let set = FrameSet {
            spec,
            frames: vec![vec![Complex64::new(0.0, 0.0); 16]],
        };
        let mut bytes = set.to_bytes().unwrap();
        bytes.pop();
        assert!(FrameSet::from_bytes(&bytes).is_err());
        bytes[4] = 9;
        assert!(FrameSet::from_bytes(&bytes).is_err());
    }
}
