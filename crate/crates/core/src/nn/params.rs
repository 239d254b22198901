//! Flat, named parameter storage shared by every trainable component.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named arrays laid out back to back in one vector, so optimizers,
/// digests and finite-difference probes see a single flat buffer.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub specs: Vec<ParamSpec>,
    pub data: Vec<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a zero-initialized array and returns its range.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize]) -> Range<usize> {
        let name = name.into();
        assert!(self.specs.iter().all(|s| s.name != name), "duplicate parameter {name}");
        let spec = ParamSpec {
            name,
            shape: shape.to_vec(),
            offset: self.data.len(),
        };
        let r = spec.range();
        self.data.resize(r.end, 0.0);
        self.specs.push(spec);
        r
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.specs.iter().find(|s| s.name == name).map(|s| &self.data[s.range()])
    }

    pub fn fill_uniform<R: Rng>(&mut self, range: Range<usize>, bound: f64, rng: &mut R) {
        for v in &mut self.data[range] {
            *v = rng.gen_range(-bound..=bound);
        }
    }

    /// SHA-256 over names, shapes and little-endian values.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.specs {
            h.update(s.name.as_bytes());
            for d in &s.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &self.data[s.range()] {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn check_finite(&self, step: usize) -> Result<()> {
        for s in &self.specs {
            if self.data[s.range()].iter().any(|v| !v.is_finite()) {
                return Err(Error::NumericalFailure {
                    step,
                    what: format!("parameter {} is not finite", s.name),
                });
            }
        }
        Ok(())
    }

    /// Same layout, all zeros (gradient buffers).
    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.data.len()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_digest() {
        let mut p = ParamSet::new();
        let a = p.add("a", &[2, 3]);
        let b = p.add("b", &[4]);
        assert_eq!(a, 0..6);
        assert_eq!(b, 6..10);
        assert_eq!(p.len(), 10);
        let d0 = p.digest();
        p.data[7] = 1.0;
        assert_ne!(p.digest(), d0);
        assert_eq!(p.get("b").unwrap(), &[0.0, 1.0, 0.0, 0.0]);
        p.data[0] = f64::NAN;
        assert!(p.check_finite(3).is_err());
    }
}
