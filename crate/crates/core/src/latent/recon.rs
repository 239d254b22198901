//! The decoder-side linear chain (rescaled samples → interpolation → CP
//! removal → DFT → occupied bins) as one real matrix, so reconstruction
//! losses and their adjoints are plain matrix products.

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{gemm, Op};
use crate::multirate::{interpolate, ResamplerSpec};
use crate::signal::FrameSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconOp {
    pub n_prime: usize,
    pub n_occ: usize,
    /// Row-major `2·n_occ × 2·n_prime`, real-interleaved on both sides.
    m: Vec<f64>,
}

impl ReconOp {
    pub fn new(frame: &FrameSpec, rs: &ResamplerSpec) -> Result<Self> {
        let n_prime = rs.decimated_len(frame.frame_len())?;
        let n_occ = frame.n_sym;
        let cols = 2 * n_prime;
        let mut m = vec![0.0; 2 * n_occ * cols];
        let mut impulse = vec![Complex64::new(0.0, 0.0); n_prime];
        for j in 0..n_prime {
            impulse[j] = Complex64::new(1.0, 0.0);
            let col = frame.occupied_spectrum(&interpolate(&impulse, rs)?)?;
            impulse[j] = Complex64::new(0.0, 0.0);
            for (k, c) in col.iter().enumerate() {
                m[(2 * k) * cols + 2 * j] = c.re;
                m[(2 * k) * cols + 2 * j + 1] = -c.im;
                m[(2 * k + 1) * cols + 2 * j] = c.im;
                m[(2 * k + 1) * cols + 2 * j + 1] = c.re;
            }
        }
        Ok(Self { n_prime, n_occ, m })
    }

    /// `X̂ = Ŝ Mᵀ` for `batch` rows of `2·n_prime` reals.
    pub fn apply(&self, s: &[f64], batch: usize) -> Vec<f64> {
        let mut out = vec![0.0; batch * 2 * self.n_occ];
        gemm(batch, 2 * self.n_prime, 2 * self.n_occ, 1.0, s, Op::N, &self.m, Op::T, 0.0, &mut out);
        out
    }

    /// `∂L/∂Ŝ = ∂L/∂X̂ · M`.
    pub fn adjoint(&self, dx: &[f64], batch: usize) -> Vec<f64> {
        let mut out = vec![0.0; batch * 2 * self.n_prime];
        gemm(batch, 2 * self.n_occ, 2 * self.n_prime, 1.0, dx, Op::N, &self.m, Op::N, 0.0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{deinterleave, interleave};
    use crate::signal::Scenario;

    #[test]
    fn matches_direct_chain() {
        for scenario in [Scenario::Downlink, Scenario::Uplink] {
            let frame = FrameSpec::new(scenario, 64, 30, 8, 16).unwrap();
            let rs = ResamplerSpec::new(5, 8, 41, 6.0).unwrap();
            let op = ReconOp::new(&frame, &rs).unwrap();
            let n = op.n_prime;
            let s: Vec<Complex64> = (0..n).map(|i| Complex64::new((i as f64).sin(), (0.3 * i as f64).cos())).collect();
            let direct = frame.occupied_spectrum(&interpolate(&s, &rs).unwrap()).unwrap();
            let via = deinterleave(&op.apply(&interleave(&s), 1));
            for (a, b) in direct.iter().zip(&via) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        let frame = FrameSpec::new(Scenario::Downlink, 32, 14, 0, 4).unwrap();
        let rs = ResamplerSpec::new(5, 8, 21, 5.0).unwrap();
        let op = ReconOp::new(&frame, &rs).unwrap();
        let x: Vec<f64> = (0..2 * op.n_prime).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..2 * op.n_occ).map(|i| (i as f64 * 1.3).cos()).collect();
        let ax = op.apply(&x, 1);
        let aty = op.adjoint(&y, 1);
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
