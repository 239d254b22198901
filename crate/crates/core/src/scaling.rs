//! Per-block integer gain normalization and its inverse.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    /// Complex samples per block.
    pub n_s: usize,
    /// Bits per scaling factor.
    pub q_s: u32,
}

impl ScalingConfig {
    pub fn new(n_s: usize, q_s: u32) -> Result<Self> {
        let c = Self { n_s, q_s };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return Err(Error::Config("n_s must be positive".into()));
        }
        if !(1..=15).contains(&self.q_s) {
            return Err(Error::Config(format!("q_s = {} outside [1, 15]", self.q_s)));
        }
        Ok(())
    }

    /// Number of blocks N_t for a frame of `n` samples.
    pub fn n_t(&self, n: usize) -> usize {
        n.div_ceil(self.n_s)
    }

    pub fn max_factor(&self) -> u32 {
        (1 << self.q_s) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaledFrame {
    pub s: Vec<Complex64>,
    pub t: Vec<u32>,
}

fn block_factor(block: &[Complex64], max: u32) -> u32 {
    let peak = block.iter().fold(0.0f64, |m, v| m.max(v.re.abs()).max(v.im.abs()));
    (peak.ceil().min(max as f64) as u32).max(1)
}

pub fn compute_and_apply_scaling(x: &[Complex64], cfg: &ScalingConfig) -> Result<ScaledFrame> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(Error::InputShape("cannot scale an empty frame".into()));
    }
    let mut s = Vec::with_capacity(x.len());
    let mut t = Vec::with_capacity(cfg.n_t(x.len()));
    for block in x.chunks(cfg.n_s) {
        let tk = block_factor(block, cfg.max_factor());
        let inv = tk as f64;
        s.extend(block.iter().map(|v| v / inv));
        t.push(tk);
    }
    Ok(ScaledFrame { s, t })
}

pub fn rescale(s_hat: &[Complex64], t: &[u32], cfg: &ScalingConfig) -> Result<Vec<Complex64>> {
    if t.len() != cfg.n_t(s_hat.len()) {
        return Err(Error::InputShape(format!(
            "{} factors for {} samples in blocks of {}",
            t.len(),
            s_hat.len(),
            cfg.n_s
        )));
    }
    Ok(s_hat
        .chunks(cfg.n_s)
        .zip(t)
        .flat_map(|(block, &tk)| block.iter().map(move |v| v * tk as f64))
        .collect())
}

/// Appends the factors as `q_s`-bit fields, MSB-first.
pub fn write_factors(w: &mut BitWriter, t: &[u32], cfg: &ScalingConfig) -> Result<()> {
    for &tk in t {
        if tk == 0 || tk > cfg.max_factor() {
            return Err(Error::InputShape(format!("factor {tk} does not fit {} bits", cfg.q_s)));
        }
        w.write(tk as u64, cfg.q_s);
    }
    Ok(())
}

pub fn read_factors(r: &mut BitReader<'_>, n_t: usize, cfg: &ScalingConfig) -> Result<Vec<u32>> {
    (0..n_t)
        .map(|_| {
            let v = r.read(cfg.q_s)? as u32;
            if v == 0 {
                Err(Error::CorruptStream("zero scaling factor".into()))
            } else {
                Ok(v)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn ceiling_branch() {
        let cfg = ScalingConfig::new(2, 4).unwrap();
        let f = compute_and_apply_scaling(&[c(3.2, -1.0), c(0.5, 2.0)], &cfg).unwrap();
        assert_eq!(f.t, vec![4]);
        assert_eq!(f.s[0], c(0.8, -0.25));
    }

    #[test]
    fn clamp_branch_allows_overflow() {
        let cfg = ScalingConfig::new(1, 4).unwrap();
        let f = compute_and_apply_scaling(&[c(-20.0, 1.0)], &cfg).unwrap();
        assert_eq!(f.t, vec![15]);
        // The clamp leaves the scaled sample outside the unit box.
        assert!((f.s[0].re + 20.0 / 15.0).abs() < 1e-15);
        assert!(f.s[0].re.abs() > 1.0);
        let back = rescale(&f.s, &f.t, &cfg).unwrap();
        assert!((back[0] - c(-20.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn silent_block_floors_at_one() {
        let cfg = ScalingConfig::new(3, 8).unwrap();
        let x = vec![c(0.0, 0.0); 3];
        let f = compute_and_apply_scaling(&x, &cfg).unwrap();
        assert_eq!(f.t, vec![1]);
        assert_eq!(f.s, x);
    }

    #[test]
    fn unit_factors_are_identity() {
        let cfg = ScalingConfig::new(2, 8).unwrap();
        let s = vec![c(0.1, 0.2), c(0.3, -0.4), c(-0.5, 0.6)];
        assert_eq!(rescale(&s, &[1, 1], &cfg).unwrap(), s);
        assert!(rescale(&s, &[1], &cfg).is_err());
    }

    #[test]
    fn partial_last_block() {
        let cfg = ScalingConfig::new(4, 8).unwrap();
        let x: Vec<Complex64> = (0..10).map(|i| c(i as f64, 0.0)).collect();
        let f = compute_and_apply_scaling(&x, &cfg).unwrap();
        assert_eq!(f.t, vec![3, 7, 9]);
    }

    #[test]
    fn factor_bits_round_trip() {
        let cfg = ScalingConfig::new(4, 5).unwrap();
        let mut w = BitWriter::new();
        write_factors(&mut w, &[1, 17, 31], &cfg).unwrap();
        assert_eq!(w.bit_len(), 15);
        let bytes = w.into_bytes();
        // 00001 10001 11111 (MSB-first)
        assert_eq!(bytes, vec![0b0000_1100, 0b0111_1110]);
        let mut r = BitReader::new(&bytes);
        assert_eq!(read_factors(&mut r, 3, &cfg).unwrap(), vec![1, 17, 31]);
        assert!(write_factors(&mut BitWriter::new(), &[32], &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(ScalingConfig::new(0, 8).is_err());
        assert!(ScalingConfig::new(4, 0).is_err());
        assert!(ScalingConfig::new(4, 16).is_err());
    }

    proptest! {
        #[test]
        fn factors_fit_and_scaled_box(
            v in proptest::collection::vec((-300.0f64..300.0, -300.0f64..300.0), 1..64),
            n_s in 1usize..20,
            q_s in 1u32..10,
        ) {
            let cfg = ScalingConfig::new(n_s, q_s).unwrap();
            let x: Vec<Complex64> = v.iter().map(|&(a, b)| c(a, b)).collect();
            let f = compute_and_apply_scaling(&x, &cfg).unwrap();
            prop_assert_eq!(f.t.len(), cfg.n_t(x.len()));
            for (block, &tk) in x.chunks(n_s).zip(&f.t) {
                prop_assert!(tk >= 1 && tk <= cfg.max_factor());
                let peak = block.iter().fold(0.0f64, |m, z| m.max(z.re.abs()).max(z.im.abs()));
                if peak <= cfg.max_factor() as f64 {
                    for z in block {
                        prop_assert!((z.re / tk as f64).abs() <= 1.0);
                        prop_assert!((z.im / tk as f64).abs() <= 1.0);
                    }
                }
            }
        }

        #[test]
        fn integer_peaks_round_trip_within_one_ulp(
            v in proptest::collection::vec((-100i32..100, -100i32..100), 1..40),
            n_s in 1usize..8,
        ) {
            // x / t · t can differ from x by one rounding step when t is not
            // a power of two.
            let cfg = ScalingConfig::new(n_s, 8).unwrap();
            let x: Vec<Complex64> = v.iter().map(|&(a, b)| c(a as f64, b as f64)).collect();
            let f = compute_and_apply_scaling(&x, &cfg).unwrap();
            let back = rescale(&f.s, &f.t, &cfg).unwrap();
            for (a, b) in back.iter().zip(&x) {
                prop_assert!((a.re - b.re).abs() <= b.re.abs() * f64::EPSILON);
                prop_assert!((a.im - b.im).abs() <= b.im.abs() * f64::EPSILON);
            }
        }

        #[test]
        fn power_of_two_factors_round_trip_exactly(
            v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40),
            e in 0u32..7,
        ) {
            let peak = (1u32 << e) as f64;
            let mut x: Vec<Complex64> = v.iter().map(|&(a, b)| c(a * peak, b * peak)).collect();
            x[0] = c(peak, 0.0);
            let cfg = ScalingConfig::new(x.len(), 8).unwrap();
            let f = compute_and_apply_scaling(&x, &cfg).unwrap();
            prop_assert_eq!(f.t[0], 1u32 << e);
            prop_assert_eq!(rescale(&f.s, &f.t, &cfg).unwrap(), x);
        }
    }
}
