//! Gray-mapped square QAM with unit average power.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Qam {
    order: u32,
    bits_per_axis: u32,
    norm: f64,
}

impl Qam {
    pub fn new(order: u32) -> Result<Self> {
        if !matches!(order, 4 | 16 | 64) {
            return Err(Error::Config(format!(
                "unsupported modulation order {order} (expected 4, 16 or 64)"
            )));
        }
        let bits_per_axis = order.trailing_zeros() / 2;
        // E|c|^2 = 2 (L^2 - 1) / 3 for L-PAM on each axis with odd integer levels.
        let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
        Ok(Self {
            order,
            bits_per_axis,
            norm,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        2 * self.bits_per_axis as usize
    }

    fn pam(&self, bits: &[u8]) -> f64 {
        // Gray → binary, then binary index → odd integer level.
        let mut acc = 0u32;
        let mut idx = 0u32;
        for &b in bits {
            acc ^= b as u32;
            idx = (idx << 1) | acc;
        }
        let levels = 1u32 << self.bits_per_axis;
        (2 * idx) as f64 - (levels - 1) as f64
    }

    /// Maps one symbol's worth of bits (I bits first, then Q bits).
    pub fn map_symbol(&self, bits: &[u8]) -> Complex64 {
        let k = self.bits_per_axis as usize;
        Complex64::new(self.pam(&bits[..k]), self.pam(&bits[k..2 * k])) / self.norm
    }

    pub fn map(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(Error::InputShape(format!(
                "{} bits is not a multiple of {bps} bits per symbol",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::InputShape("bit values must be 0 or 1".into()));
        }
        Ok(bits.chunks(bps).map(|c| self.map_symbol(c)).collect())
    }

    /// Every constellation point, in index order.
    pub fn constellation(&self) -> Vec<Complex64> {
        let bps = self.bits_per_symbol();
        (0..self.order)
            .map(|v| {
                let bits: Vec<u8> = (0..bps).rev().map(|i| ((v >> i) & 1) as u8).collect();
                self.map_symbol(&bits)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_average_power() {
        for m in [4, 16, 64] {
            let q = Qam::new(m).unwrap();
            let pts = q.constellation();
            let p: f64 = pts.iter().map(|c| c.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((p - 1.0).abs() < 1e-12, "order {m}: {p}");
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let q = Qam::new(16).unwrap();
        // I axis for bits 00,01,11,10 must be monotone.
        let levels: Vec<f64> = [[0, 0], [0, 1], [1, 1], [1, 0]]
            .iter()
            .map(|b| q.map_symbol(&[b[0], b[1], 0, 0]).re)
            .collect();
        assert!(levels.windows(2).all(|w| w[0] < w[1]), "{levels:?}");
    }

    #[test]
    fn rejects_unsupported_order() {
        assert!(matches!(Qam::new(8), Err(Error::Config(_))));
        assert!(matches!(Qam::new(256), Err(Error::Config(_))));
    }

    #[test]
    fn all_distinct_points() {
        let pts = Qam::new(64).unwrap().constellation();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                assert!((pts[i] - pts[j]).norm() > 1e-9);
            }
        }
    }
}
