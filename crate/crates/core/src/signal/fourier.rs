//! Unitary DFT helpers on top of `rustfft`, with a per-thread plan cache.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn transform(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = x.to_vec();
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        let fft = if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        };
        fft.process(&mut buf);
    });
    let scale = 1.0 / (n as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Unitary forward DFT: `X[k] = n^{-1/2} Σ x[t] e^{-j2πkt/n}`.
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    transform(x, false)
}

/// Unitary inverse DFT.
pub fn idft(x: &[Complex64]) -> Vec<Complex64> {
    transform(x, true)
}

/// Signed frequency of natural-order bin `k` in an `n`-point DFT.
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Natural-order bin index of signed frequency `f` in an `n`-point DFT.
pub fn natural_bin(f: i64, n: usize) -> usize {
    f.rem_euclid(n as i64) as usize
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let x: Vec<Complex64> = (0..37)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let y = idft(&dft(&x));
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn parseval() {
        let x: Vec<Complex64> = (0..64).map(|i| Complex64::new(i as f64, -(i as f64) / 3.0)).collect();
        let ex: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let ey: f64 = dft(&x).iter().map(|v| v.norm_sqr()).sum();
        assert!((ex - ey).abs() / ex < 1e-12);
    }

    #[test]
    fn bin_mapping_is_inverse() {
        for n in [8usize, 9] {
            for k in 0..n {
                assert_eq!(natural_bin(signed_bin(k, n), n), k);
            }
        }
        assert_eq!(signed_bin(5, 8), -3);
    }
}
