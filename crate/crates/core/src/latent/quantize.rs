//! Latent quantizers: clipped uniform levels on [0, 1] and nearest-row
//! lookup in a learned codebook.

use serde::{Deserialize, Serialize};

use crate::classical::vector::nearest_row;
use crate::error::{Error, Result};

pub fn uniform_steps(q_bits: u32) -> f64 {
    ((1u64 << q_bits) - 1) as f64
}

/// Level index of `z` after clipping to [0, 1].
pub fn uniform_index(z: f64, q_bits: u32) -> u32 {
    (z.clamp(0.0, 1.0) * uniform_steps(q_bits) + 0.5).floor() as u32
}

/// `⌊(2^Q − 1)·clip(z) + ½⌋ / (2^Q − 1)`.
pub fn uniform_latent_quantize(z: f64, q_bits: u32) -> f64 {
    uniform_index(z, q_bits) as f64 / uniform_steps(q_bits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVqCodebook {
    /// Row-major `2^{bQ} × b`.
    pub e: Vec<f64>,
    pub b: usize,
    pub q_bits: u32,
    pub beta: f64,
}

/// Codebook and commitment terms of the VQ objective (means over latent
/// scalars, commitment already multiplied by β).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VqTerms {
    pub codebook: f64,
    pub commitment: f64,
}

impl LatentVqCodebook {
    pub fn zeroed(b: usize, q_bits: u32, beta: f64) -> Result<Self> {
        if b == 0 || q_bits == 0 || b as u32 * q_bits > 16 {
            return Err(Error::Config(format!("latent codebook with b = {b}, Q = {q_bits} is out of range")));
        }
        Ok(Self {
            e: vec![0.0; (1usize << (b as u32 * q_bits)) * b],
            b,
            q_bits,
            beta,
        })
    }

    pub fn rows(&self) -> usize {
        self.e.len() / self.b
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.e[i * self.b..(i + 1) * self.b]
    }

    pub fn index_bits(&self) -> u32 {
        self.b as u32 * self.q_bits
    }

    pub fn validate(&self) -> Result<()> {
        if self.b == 0 || self.e.len() != (1usize << self.index_bits()) * self.b {
            return Err(Error::Format("latent codebook shape does not match b and Q".into()));
        }
        if self.e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("latent codebook has non-finite entries".into()));
        }
        Ok(())
    }

    /// Replaces every block of `z` by its nearest row (lowest index on
    /// ties). `z.len()` must be a multiple of `b`.
    pub fn quantize(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
        if z.len() % self.b != 0 {
            return Err(Error::InputShape(format!("{} latents do not split into blocks of {}", z.len(), self.b)));
        }
        let mut out = Vec::with_capacity(z.len());
        let idx: Vec<usize> = z
            .chunks_exact(self.b)
            .map(|blk| {
                let (i, _) = nearest_row(&self.e, self.b, blk);
                out.extend_from_slice(self.row(i));
                i
            })
            .collect();
        Ok((out, idx))
    }

    /// Codebook term `mean(sg[z] − ẑ)²` and commitment `β·mean(z − sg[ẑ])²`
    /// for blocks assigned by `assign`. Gradients follow the stop-gradient
    /// routing: `scale·∂/∂z` of the commitment only is added to `dz`, and
    /// `scale·∂/∂e` of the codebook term only is added to `de`.
    pub fn aux_terms(
        &self,
        z: &[f64],
        assign: &[usize],
        scale: f64,
        mut dz: Option<&mut [f64]>,
        mut de: Option<&mut [f64]>,
    ) -> VqTerms {
        let n = z.len().max(1) as f64;
        let mut sq = 0.0;
        for (k, (blk, &a)) in z.chunks_exact(self.b).zip(assign).enumerate() {
            for d in 0..self.b {
                let e = self.e[a * self.b + d];
                let diff = blk[d] - e;
                sq += diff * diff;
                if let Some(dz) = dz.as_deref_mut() {
                    dz[k * self.b + d] += scale * 2.0 * self.beta * diff / n;
                }
                if let Some(de) = de.as_deref_mut() {
                    de[a * self.b + d] -= scale * 2.0 * diff / n;
                }
            }
        }
        VqTerms {
            codebook: sq / n,
            commitment: self.beta * sq / n,
        }
    }
}
