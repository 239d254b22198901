//! Rational-rate resampling: up by `k`, low-pass, down by `m` at the encoder
//! and the mirrored chain at the decoder.
//!
//! Filtering is circular over the frame, so the `(taps − 1)/2` group delay
//! is removed exactly and no edge transient is produced. Only the nonzero
//! samples of the zero-stuffed sequence and only the retained output samples
//! are ever computed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResamplerSpec {
    pub k: usize,
    pub m: usize,
    pub taps: usize,
    pub kaiser_beta: f64,
    /// Skip filtering entirely (diagnostics).
    #[serde(default)]
    pub bypass: bool,
}

impl Default for ResamplerSpec {
    fn default() -> Self {
        Self {
            k: 5,
            m: 8,
            taps: 321,
            kaiser_beta: 8.0,
            bypass: false,
        }
    }
}

impl ResamplerSpec {
    pub fn new(k: usize, m: usize, taps: usize, kaiser_beta: f64) -> Result<Self> {
        let s = Self {
            k,
            m,
            taps,
            kaiser_beta,
            bypass: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn identity() -> Self {
        Self {
            k: 1,
            m: 1,
            taps: 1,
            kaiser_beta: 0.0,
            bypass: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.m == 0 {
            return Err(Error::Config("resampler factors must be positive".into()));
        }
        let diagnostics = self.k == 1 && self.m == 1;
        if self.m <= self.k && !diagnostics {
            return Err(Error::Config(format!(
                "decimation needs m > k (k = {}, m = {})",
                self.k, self.m
            )));
        }
        if self.taps == 0 || self.taps % 2 == 0 {
            return Err(Error::Config(format!("filter length {} must be odd", self.taps)));
        }
        if !(self.kaiser_beta >= 0.0) {
            return Err(Error::Config("kaiser_beta must be non-negative".into()));
        }
        Ok(())
    }

    /// Decimated length for an input of `n` samples.
    pub fn decimated_len(&self, n: usize) -> Result<usize> {
        ratio_len(n, self.k, self.m)
    }

    /// Interpolated length for an input of `n` decimated samples.
    pub fn interpolated_len(&self, n: usize) -> Result<usize> {
        ratio_len(n, self.m, self.k)
    }

    /// Low-pass prototype at the upsampled rate with the given DC gain.
    pub fn design(&self, gain: f64) -> Vec<f64> {
        kaiser_lowpass(
            self.taps,
            std::f64::consts::PI / self.k.max(self.m) as f64,
            self.kaiser_beta,
            gain,
        )
    }
}

fn ratio_len(n: usize, up: usize, down: usize) -> Result<usize> {
    if (n * up) % down != 0 {
        return Err(Error::Config(format!(
            "{n} samples × {up} / {down} is not an integer length"
        )));
    }
    Ok(n * up / down)
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

pub fn kaiser_window(len: usize, beta: f64) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = bessel_i0(beta);
    (0..len)
        .map(|n| {
            let r = 2.0 * n as f64 / (len - 1) as f64 - 1.0;
            bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / denom
        })
        .collect()
}

/// Kaiser-windowed sinc with cutoff `cutoff` (rad/sample), normalized to
/// an exact DC gain of `gain`.
pub fn kaiser_lowpass(taps: usize, cutoff: f64, beta: f64, gain: f64) -> Vec<f64> {
    let centre = (taps - 1) as f64 / 2.0;
    let w = kaiser_window(taps, beta);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - centre;
            let s = if t == 0.0 {
                cutoff / std::f64::consts::PI
            } else {
                (cutoff * t).sin() / (std::f64::consts::PI * t)
            };
            s * w[n]
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v *= gain / sum);
    h
}

/// Circular `up`-fold zero insertion, filtering with `h` (delay-compensated)
/// and keeping every `down`-th sample.
fn resample(x: &[Complex64], up: usize, down: usize, h: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let l = n * up;
    let out_len = l / down;
    let delay = (h.len() - 1) / 2;
    let mut y = vec![Complex64::new(0.0, 0.0); out_len];
    for (i, out) in y.iter_mut().enumerate() {
        let j = i * down + delay;
        // Taps t with (j − t) ≡ 0 (mod up) hit the nonzero upsampled samples.
        let mut t = j % up;
        let mut acc = Complex64::new(0.0, 0.0);
        while t < h.len() {
            let idx = (j + l * h.len() - t) % l;
            acc += x[idx / up] * h[t];
            t += up;
        }
        *out = acc;
    }
    y
}

/// Encoder-side decimation: output length `N·k/m`.
pub fn decimate(x: &[Complex64], spec: &ResamplerSpec) -> Result<Vec<Complex64>> {
    spec.validate()?;
    let out = spec.decimated_len(x.len())?;
    if spec.bypass {
        return if out == x.len() {
            Ok(x.to_vec())
        } else {
            Err(Error::Config("bypass requires k = m".into()))
        };
    }
    Ok(resample(x, spec.k, spec.m, &spec.design(spec.k as f64)))
}

/// Decoder-side interpolation: output length `N'·m/k`.
pub fn interpolate(x: &[Complex64], spec: &ResamplerSpec) -> Result<Vec<Complex64>> {
    spec.validate()?;
    let out = spec.interpolated_len(x.len())?;
    if spec.bypass {
        return if out == x.len() {
            Ok(x.to_vec())
        } else {
            Err(Error::Config("bypass requires k = m".into()))
        };
    }
    Ok(resample(x, spec.m, spec.k, &spec.design(spec.m as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::channel::complex_normal;
    use crate::signal::fourier;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| complex_normal(&mut rng, 1.0)).collect()
    }

    /// Direct evaluation: explicit zero-stuffed sequence, full circular
    /// convolution, then downsampling.
    fn reference(x: &[Complex64], up: usize, down: usize, h: &[f64]) -> Vec<Complex64> {
        let l = x.len() * up;
        let mut xu = vec![Complex64::new(0.0, 0.0); l];
        for (i, v) in x.iter().enumerate() {
            xu[i * up] = *v;
        }
        let d = (h.len() - 1) / 2;
        let full: Vec<Complex64> = (0..l)
            .map(|j| {
                (0..h.len())
                    .map(|t| xu[((j + d) as i64 - t as i64).rem_euclid(l as i64) as usize] * h[t])
                    .sum()
            })
            .collect();
        full.into_iter().step_by(down).collect()
    }

    #[test]
    fn fast_path_matches_direct_convolution() {
        let spec = ResamplerSpec::new(5, 8, 41, 6.0).unwrap();
        let x = noise(64, 1);
        let fast = decimate(&x, &spec).unwrap();
        let slow = reference(&x, 5, 8, &spec.design(5.0));
        assert_eq!(fast.len(), 40);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
        let back = interpolate(&fast, &spec).unwrap();
        let slow = reference(&fast, 8, 5, &spec.design(8.0));
        for (a, b) in back.iter().zip(&slow) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn default_lengths() {
        let spec = ResamplerSpec::default();
        assert_eq!(decimate(&noise(512, 2), &spec).unwrap().len(), 320);
        assert_eq!(decimate(&noise(576, 2), &spec).unwrap().len(), 360);
        assert_eq!(interpolate(&noise(320, 2), &spec).unwrap().len(), 512);
        assert!(matches!(decimate(&noise(100, 2), &spec), Err(Error::Config(_))));
    }

    #[test]
    fn bypass_is_identity() {
        let x = noise(33, 3);
        let id = ResamplerSpec::identity();
        assert_eq!(decimate(&x, &id).unwrap(), x);
        assert_eq!(interpolate(&x, &id).unwrap(), x);
    }

    #[test]
    fn unit_factors_without_bypass_reproduce_input() {
        // With k = m = 1 the cutoff is π and the windowed sinc is a delta.
        let spec = ResamplerSpec {
            k: 1,
            m: 1,
            taps: 31,
            kaiser_beta: 5.0,
            bypass: false,
        };
        let x = noise(40, 4);
        for (a, b) in decimate(&x, &spec).unwrap().iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(ResamplerSpec::new(8, 5, 41, 8.0).is_err());
        assert!(ResamplerSpec::new(5, 8, 40, 8.0).is_err());
        assert!(ResamplerSpec::new(5, 8, 41, -1.0).is_err());
    }

    #[test]
    fn linearity() {
        let spec = ResamplerSpec::default();
        let x = noise(512, 5);
        let y = noise(512, 6);
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5));
        let mix: Vec<Complex64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = decimate(&mix, &spec).unwrap();
        let dx = decimate(&x, &spec).unwrap();
        let dy = decimate(&y, &spec).unwrap();
        for i in 0..lhs.len() {
            assert!((lhs[i] - (a * dx[i] + b * dy[i])).norm() < 1e-9);
        }
    }

    #[test]
    fn interpolation_images_are_suppressed() {
        // White input at the decimated rate: after interpolation, energy in
        // bins beyond the decimated Nyquist band is bounded by the stopband.
        let spec = ResamplerSpec::default();
        let x = noise(320, 7);
        let y = interpolate(&x, &spec).unwrap();
        let spec_y = fourier::dft(&y);
        let (mut inband, mut outband) = (0.0, 0.0);
        for (k, v) in spec_y.iter().enumerate() {
            let f = fourier::signed_bin(k, 512).unsigned_abs() as usize;
            // Decimated Nyquist is 160 of 512 bins; allow the transition band.
            if f < 140 {
                inband += v.norm_sqr();
            } else if f > 180 {
                outband += v.norm_sqr();
            }
        }
        let atten_db = 10.0 * (outband / inband).log10();
        assert!(atten_db < -60.0, "{atten_db}");
    }
}
