use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ComplexFrame, Domain};
use crate::error::{Error, Result};

/// Multipath Rayleigh channel with AWGN. Taps are i.i.d. CN(0, 1) and are
/// not normalized to unit total power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub n_taps: usize,
    /// SNR against the faded signal's empirical power. `+inf` disables noise.
    pub snr_db: f64,
    pub seed: u64,
    /// Replaces the random taps (diagnostics).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taps_override: Option<Vec<(f64, f64)>>,
    /// Emit only the noise component.
    #[serde(default)]
    pub noise_only: bool,
}

impl ChannelSpec {
    pub fn new(n_taps: usize, snr_db: f64, seed: u64) -> Self {
        Self {
            n_taps,
            snr_db,
            seed,
            taps_override: None,
            noise_only: false,
        }
    }

    pub fn identity() -> Self {
        Self {
            taps_override: Some(vec![(1.0, 0.0)]),
            ..Self::new(1, f64::INFINITY, 0)
        }
    }
}

pub(crate) fn complex_normal<R: rand::Rng>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Convolves with the tap vector (truncated to the input length) and adds
/// complex white Gaussian noise.
pub fn apply_channel(frame: &ComplexFrame, ch: &ChannelSpec) -> Result<ComplexFrame> {
    if frame.domain != Domain::Time {
        return Err(Error::InputShape("channel expects a time-domain frame".into()));
    }
    if ch.n_taps == 0 {
        return Err(Error::Config("channel needs at least one tap".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ch.seed);
    let taps: Vec<Complex64> = match &ch.taps_override {
        Some(t) => t.iter().map(|&(re, im)| Complex64::new(re, im)).collect(),
        None => (0..ch.n_taps).map(|_| complex_normal(&mut rng, 1.0)).collect(),
    };
    let x = &frame.samples;
    let mut y: Vec<Complex64> = (0..x.len())
        .map(|n| {
            taps.iter()
                .enumerate()
                .take(n + 1)
                .map(|(l, h)| h * x[n - l])
                .sum()
        })
        .collect();

    if ch.snr_db.is_finite() || ch.noise_only {
        let signal_power = y.iter().map(|c| c.norm_sqr()).sum::<f64>() / y.len().max(1) as f64;
        let noise_power = if ch.snr_db.is_finite() {
            signal_power / 10f64.powf(ch.snr_db / 10.0)
        } else {
            signal_power
        };
        if ch.noise_only {
            y.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        }
        for v in &mut y {
            *v += complex_normal(&mut rng, noise_power);
        }
    }
    Ok(ComplexFrame::time(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> ComplexFrame {
        ComplexFrame::time((0..n).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect())
    }

    #[test]
    fn identity_channel() {
        let x = ramp(100);
        let y = apply_channel(&x, &ChannelSpec::identity()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn noise_only_has_noise_power() {
        let x = ramp(20_000);
        let ch = ChannelSpec {
            noise_only: true,
            ..ChannelSpec {
                taps_override: Some(vec![(1.0, 0.0)]),
                ..ChannelSpec::new(1, 0.0, 5)
            }
        };
        let y = apply_channel(&x, &ch).unwrap();
        let ratio = y.power() / x.power();
        assert!((ratio - 1.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn measured_snr_matches_target() {
        let n = 100_000;
        let x = ComplexFrame::time(
            (0..n)
                .map(|i| Complex64::from_polar(1.0, i as f64 * 0.917))
                .collect(),
        );
        let clean = apply_channel(
            &x,
            &ChannelSpec {
                snr_db: f64::INFINITY,
                ..ChannelSpec::new(7, 5.0, 42)
            },
        )
        .unwrap();
        let noisy = apply_channel(&x, &ChannelSpec::new(7, 5.0, 42)).unwrap();
        let ps = clean.power();
        let pn = noisy
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n as f64;
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 5.0).abs() < 0.2, "{snr}");
    }

    #[test]
    fn deterministic_given_seed() {
        let x = ramp(64);
        let a = apply_channel(&x, &ChannelSpec::new(3, 10.0, 1)).unwrap();
        let b = apply_channel(&x, &ChannelSpec::new(3, 10.0, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_frequency_domain() {
        let x = ComplexFrame::frequency(vec![Complex64::new(1.0, 0.0); 4]);
        assert!(apply_channel(&x, &ChannelSpec::identity()).is_err());
    }
}
