//! Covariance of decimated downlink frames: the closed form for i.i.d.
//! symbols on a guard-banded spectrum, and the Monte-Carlo estimate.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{gemm, Op};

/// Dense square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    pub n: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.n + c]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `‖self − other‖_F / ‖other‖_F`.
    pub fn rel_frobenius_error(&self, reference: &CMatrix) -> f64 {
        let diff: f64 = self
            .data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        diff / reference.frobenius()
    }

    /// Largest deviation from Hermitian symmetry.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for c in r..self.n {
                worst = worst.max((self.get(r, c) - self.get(c, r).conj()).norm());
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    #[serde(skip)]
    pub analytic: CMatrix,
    #[serde(skip)]
    pub empirical: CMatrix,
    pub frames: usize,
    pub n_prime: usize,
    pub k_star: usize,
    pub power: f64,
    pub rel_frobenius_error: f64,
    /// Largest |sample mean| / standard error over all components.
    pub max_mean_z: f64,
}

/// `Cov(x'_n, x'_m) = (P/N') Σ_{k=k*}^{N'-k*-1} e^{jβ(n−m)k}`, β = 2π/N'.
///
/// The summation index runs over the DC-centred spectrum; see
/// [`center_spectrum`] for mapping natural-order frames onto it.
pub fn analytic_covariance(n_prime: usize, k_star: usize, power: f64) -> Result<CMatrix> {
    if n_prime == 0 || 2 * k_star >= n_prime {
        return Err(Error::Config(format!(
            "need 0 <= 2*k_star < n_prime (k_star = {k_star}, n_prime = {n_prime})"
        )));
    }
    let beta = 2.0 * std::f64::consts::PI / n_prime as f64;
    // The matrix is Toeplitz in (n − m); evaluate each lag once.
    let lag = |d: i64| -> Complex64 {
        let s: Complex64 = (k_star..n_prime - k_star)
            .map(|k| Complex64::from_polar(1.0, beta * d as f64 * k as f64))
            .sum();
        s * (power / n_prime as f64)
    };
    let lags: Vec<Complex64> = (-(n_prime as i64 - 1)..n_prime as i64).map(lag).collect();
    let mut m = CMatrix::zeros(n_prime);
    for r in 0..n_prime {
        for c in 0..n_prime {
            let d = r as i64 - c as i64;
            m.data[r * n_prime + c] = lags[(d + n_prime as i64 - 1) as usize];
        }
    }
    Ok(m)
}

/// Multiplies sample `n` by `(−1)^n`, moving DC to bin N/2 so that a
/// DC-centred occupied band occupies bins `[k*, N − k*)`.
pub fn center_spectrum(x: &[Complex64]) -> Vec<Complex64> {
    x.iter()
        .enumerate()
        .map(|(n, &v)| if n % 2 == 0 { v } else { -v })
        .collect()
}

/// Sample mean of each component.
pub fn sample_mean(frames: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
    let n = frames.first().map(|f| f.len()).unwrap_or(0);
    if frames.iter().any(|f| f.len() != n) {
        return Err(Error::InputShape("frames differ in length".into()));
    }
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    for f in frames {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v;
        }
    }
    let inv = 1.0 / frames.len().max(1) as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

/// `(1/F) Σ (x − μ)(x − μ)†` over equally long frames.
pub fn empirical_covariance(frames: &[Vec<Complex64>]) -> Result<CMatrix> {
    if frames.len() < 2 {
        return Err(Error::Statistics(format!(
            "covariance needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let mean = sample_mean(frames)?;
    let n = mean.len();
    let f = frames.len();
    let mut re = vec![0.0; f * n];
    let mut im = vec![0.0; f * n];
    for (i, frame) in frames.iter().enumerate() {
        for (j, (v, m)) in frame.iter().zip(&mean).enumerate() {
            let d = v - m;
            re[i * n + j] = d.re;
            im[i * n + j] = d.im;
        }
    }
    // C = Dᵀ conj(D) = (RᵀR + IᵀI) + j(IᵀR − RᵀI)
    let scale = 1.0 / f as f64;
    let mut c_re = vec![0.0; n * n];
    let mut c_im = vec![0.0; n * n];
    gemm(n, f, n, scale, &re, Op::T, &re, Op::N, 0.0, &mut c_re);
    gemm(n, f, n, scale, &im, Op::T, &im, Op::N, 1.0, &mut c_re);
    gemm(n, f, n, scale, &im, Op::T, &re, Op::N, 0.0, &mut c_im);
    gemm(n, f, n, -scale, &re, Op::T, &im, Op::N, 1.0, &mut c_im);
    Ok(CMatrix {
        n,
        data: c_re
            .into_iter()
            .zip(c_im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect(),
    })
}
