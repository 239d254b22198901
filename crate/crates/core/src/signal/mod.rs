//! Baseband frame generation (downlink OFDMA, uplink SC-FDMA), the multipath
//! channel, EVM, and the second-order statistics of decimated frames.

pub mod channel;
pub mod covariance;
pub mod dataset;
pub mod evm;
pub mod fourier;
pub mod qam;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use channel::{apply_channel, ChannelSpec};
pub use covariance::{analytic_covariance, center_spectrum, empirical_covariance, CMatrix, CovarianceReport};
pub use evm::{evm, Evm, EvmAccumulator};
pub use qam::Qam;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Downlink,
    Uplink,
}

impl Scenario {
    pub fn code(self) -> u8 {
        match self {
            Scenario::Downlink => 0,
            Scenario::Uplink => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Scenario::Downlink),
            1 => Ok(Scenario::Uplink),
            c => Err(Error::Format(format!("unknown scenario code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Time,
    Frequency,
}

/// A finite sequence of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexFrame {
    pub samples: Vec<Complex64>,
    pub domain: Domain,
}

impl ComplexFrame {
    pub fn time(samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            domain: Domain::Time,
        }
    }

    pub fn frequency(samples: Vec<Complex64>) -> Self {
        Self {
            samples,
            domain: Domain::Frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|c| c.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// Frame numerology. The occupied set is a contiguous block centred on DC;
/// `occupied[i]` is the natural-order DFT bin of signed frequency
/// `i - n_sym/2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub scenario: Scenario,
    pub n_fft: usize,
    pub n_sym: usize,
    pub n_cp: usize,
    pub mod_order: u32,
    occupied: Vec<usize>,
}

impl FrameSpec {
    pub fn new(scenario: Scenario, n_fft: usize, n_sym: usize, n_cp: usize, mod_order: u32) -> Result<Self> {
        if n_fft == 0 || n_sym == 0 {
            return Err(Error::Config("n_fft and n_sym must be positive".into()));
        }
        if n_sym > n_fft {
            return Err(Error::Config(format!("n_sym {n_sym} exceeds n_fft {n_fft}")));
        }
        if n_cp >= n_fft {
            return Err(Error::Config(format!("n_cp {n_cp} must be below n_fft {n_fft}")));
        }
        if (n_fft - n_sym) % 2 != 0 {
            return Err(Error::Config(format!(
                "n_fft - n_sym = {} must be even for a centred occupied block",
                n_fft - n_sym
            )));
        }
        Qam::new(mod_order)?;
        let half = (n_sym / 2) as i64;
        let occupied = (0..n_sym as i64)
            .map(|i| fourier::natural_bin(i - half, n_fft))
            .collect();
        Ok(Self {
            scenario,
            n_fft,
            n_sym,
            n_cp,
            mod_order,
            occupied,
        })
    }

    /// 512-point downlink, 280 occupied subcarriers, 64-QAM.
    pub fn downlink_default() -> Self {
        Self::new(Scenario::Downlink, 512, 280, 64, 64).expect("valid default")
    }

    /// 512-point uplink SC-FDMA with a 64-sample cyclic prefix, 64-QAM.
    pub fn uplink_default() -> Self {
        Self::new(Scenario::Uplink, 512, 280, 64, 64).expect("valid default")
    }

    pub fn default_for(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Downlink => Self::downlink_default(),
            Scenario::Uplink => Self::uplink_default(),
        }
    }

    pub fn occupied(&self) -> &[usize] {
        &self.occupied
    }

    /// Guard subcarriers on each side of the occupied block.
    pub fn guard(&self) -> usize {
        (self.n_fft - self.n_sym) / 2
    }

    /// Length of the frame handed to the compressor: CP-less for downlink,
    /// CP included for uplink.
    pub fn frame_len(&self) -> usize {
        match self.scenario {
            Scenario::Downlink => self.n_fft,
            Scenario::Uplink => self.n_fft + self.n_cp,
        }
    }

    pub fn qam(&self) -> Qam {
        Qam::new(self.mod_order).expect("validated at construction")
    }

    pub fn bits_per_frame(&self) -> usize {
        self.n_sym * self.qam().bits_per_symbol()
    }

    pub fn random_bits<R: Rng>(&self, rng: &mut R) -> Vec<u8> {
        (0..self.bits_per_frame()).map(|_| rng.gen_range(0..=1u8)).collect()
    }

    /// Removes the cyclic prefix (if any) and returns the occupied-subcarrier
    /// spectrum of a time-domain frame in `frame_len()` layout.
    pub fn occupied_spectrum(&self, samples: &[Complex64]) -> Result<Vec<Complex64>> {
        if samples.len() != self.frame_len() {
            return Err(Error::InputShape(format!(
                "frame has {} samples, expected {}",
                samples.len(),
                self.frame_len()
            )));
        }
        let body = match self.scenario {
            Scenario::Downlink => samples,
            Scenario::Uplink => &samples[self.n_cp..],
        };
        let spec = fourier::dft(body);
        Ok(self.occupied.iter().map(|&k| spec[k]).collect())
    }
}

fn check_bits(bits: &[u8], spec: &FrameSpec) -> Result<()> {
    if bits.len() != spec.bits_per_frame() {
        return Err(Error::InputShape(format!(
            "expected {} bits, got {}",
            spec.bits_per_frame(),
            bits.len()
        )));
    }
    Ok(())
}

/// OFDMA downlink symbol: QAM on the occupied subcarriers, zeros on the guard
/// band, unitary IDFT. The cyclic prefix is not part of the compressed frame.
pub fn build_downlink_frame(bits: &[u8], spec: &FrameSpec) -> Result<ComplexFrame> {
    if spec.scenario != Scenario::Downlink {
        return Err(Error::Config("build_downlink_frame needs a downlink spec".into()));
    }
    check_bits(bits, spec)?;
    let symbols = spec.qam().map(bits)?;
    let mut grid = vec![Complex64::new(0.0, 0.0); spec.n_fft];
    for (&k, &c) in spec.occupied().iter().zip(&symbols) {
        grid[k] = c;
    }
    Ok(ComplexFrame::time(fourier::idft(&grid)))
}

/// SC-FDMA uplink symbol with cyclic prefix: N_sym-point DFT spreading,
/// localized mapping onto the occupied block, N_fft-point IDFT, CP prepended.
pub fn build_uplink_tx_frame(bits: &[u8], spec: &FrameSpec) -> Result<ComplexFrame> {
    if spec.scenario != Scenario::Uplink {
        return Err(Error::Config("build_uplink_tx_frame needs an uplink spec".into()));
    }
    check_bits(bits, spec)?;
    let symbols = spec.qam().map(bits)?;
    let spread = fourier::dft(&symbols);
    let half = (spec.n_sym / 2) as i64;
    let mut grid = vec![Complex64::new(0.0, 0.0); spec.n_fft];
    for (j, &v) in spread.iter().enumerate() {
        let f = fourier::signed_bin(j, spec.n_sym);
        grid[spec.occupied()[(f + half) as usize]] = v;
    }
    let body = fourier::idft(&grid);
    Ok(ComplexFrame::time(add_cyclic_prefix(&body, spec.n_cp)))
}

pub fn add_cyclic_prefix(body: &[Complex64], n_cp: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(body.len() + n_cp);
    out.extend_from_slice(&body[body.len() - n_cp..]);
    out.extend_from_slice(body);
    out
}

/// The frame the compressor sees for `index` under `seed`: random bits,
/// modulation, and (uplink) the channel. Deterministic per `(seed, index)`.
pub fn generate_frame(spec: &FrameSpec, channel: Option<&ChannelSpec>, seed: u64, index: u64) -> Result<ComplexFrame> {
    let mut bit_rng = rng::stream(seed, rng::purpose::BITS, index);
    let bits = spec.random_bits(&mut bit_rng);
    match spec.scenario {
        Scenario::Downlink => build_downlink_frame(&bits, spec),
        Scenario::Uplink => {
            let tx = build_uplink_tx_frame(&bits, spec)?;
            match channel {
                Some(ch) => {
                    let ch = ChannelSpec {
                        seed: rng::derive_seed(ch.seed ^ seed, rng::purpose::CHANNEL, index),
                        ..ch.clone()
                    };
                    apply_channel(&tx, &ch)
                }
                None => Ok(tx),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn energy(x: &[Complex64]) -> f64 {
        x.iter().map(|c| c.norm_sqr()).sum()
    }

    #[test]
    fn spec_invariants() {
        let s = FrameSpec::downlink_default();
        assert_eq!(s.occupied().len(), 280);
        let mut sorted = s.occupied().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 280);
        assert!(sorted.iter().all(|&k| k < 512));
        assert_eq!(s.guard(), 116);
        assert!(FrameSpec::new(Scenario::Downlink, 64, 65, 0, 4).is_err());
        assert!(FrameSpec::new(Scenario::Downlink, 64, 32, 64, 4).is_err());
        assert!(matches!(
            FrameSpec::new(Scenario::Downlink, 64, 32, 0, 32),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn all_zero_bits_give_constant_spectrum() {
        let spec = FrameSpec::new(Scenario::Downlink, 64, 40, 0, 4).unwrap();
        let bits = vec![0u8; spec.bits_per_frame()];
        let frame = build_downlink_frame(&bits, &spec).unwrap();
        let point = spec.qam().map_symbol(&[0, 0]);
        let mut indicator = vec![Complex64::new(0.0, 0.0); 64];
        for &k in spec.occupied() {
            indicator[k] = Complex64::new(1.0, 0.0);
        }
        let expected = fourier::idft(&indicator);
        for (a, b) in frame.samples.iter().zip(&expected) {
            assert!((a - b * point).norm() < 1e-12);
        }
    }

    #[test]
    fn full_band_frame_has_unit_power() {
        let spec = FrameSpec::new(Scenario::Downlink, 256, 256, 0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = 0.0;
        for _ in 0..50 {
            let bits = spec.random_bits(&mut rng);
            p += build_downlink_frame(&bits, &spec).unwrap().power();
        }
        assert!((p / 50.0 - 1.0).abs() < 0.05, "{}", p / 50.0);
    }

    #[test]
    fn downlink_default_numerology() {
        let spec = FrameSpec::new(Scenario::Downlink, 512, 320, 64, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bits = spec.random_bits(&mut rng);
        let frame = build_downlink_frame(&bits, &spec).unwrap();
        assert_eq!(frame.len(), 512);
        let grid = fourier::dft(&frame.samples);
        let zeros = grid.iter().filter(|c| c.norm() < 1e-9).count();
        assert_eq!(zeros, 192);
        // Parseval: frequency energy equals the QAM energy placed on the grid.
        let qam_energy = energy(&spec.qam().map(&bits).unwrap());
        assert!((energy(&frame.samples) - qam_energy).abs() / qam_energy < 1e-9);
    }

    #[test]
    fn wrong_bit_count_is_shape_error() {
        let spec = FrameSpec::downlink_default();
        assert!(matches!(
            build_downlink_frame(&[0, 1], &spec),
            Err(Error::InputShape(_))
        ));
    }

    #[test]
    fn uplink_cp_copies_tail() {
        let spec = FrameSpec::uplink_default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame = build_uplink_tx_frame(&spec.random_bits(&mut rng), &spec).unwrap();
        assert_eq!(frame.len(), 576);
        assert_eq!(&frame.samples[..64], &frame.samples[512..]);
    }

    #[test]
    fn uplink_without_cp_is_bare_symbol() {
        let spec = FrameSpec::new(Scenario::Uplink, 64, 32, 0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let bits = spec.random_bits(&mut rng);
        let frame = build_uplink_tx_frame(&bits, &spec).unwrap();
        assert_eq!(frame.len(), 64);
    }

    #[test]
    fn full_band_sc_fdma_returns_the_symbols() {
        let spec = FrameSpec::new(Scenario::Uplink, 16, 16, 0, 4).unwrap();
        let mut bits = vec![0u8; spec.bits_per_frame()];
        // One nonzero-information symbol amid the default point.
        bits[2] = 1;
        bits[3] = 1;
        let symbols = spec.qam().map(&bits).unwrap();
        let frame = build_uplink_tx_frame(&bits, &spec).unwrap();
        for (a, b) in frame.samples.iter().zip(&symbols) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn generated_frames_are_deterministic() {
        let spec = FrameSpec::uplink_default();
        let ch = ChannelSpec::new(7, 5.0, 11);
        let a = generate_frame(&spec, Some(&ch), 9, 3).unwrap();
        let b = generate_frame(&spec, Some(&ch), 9, 3).unwrap();
        let c = generate_frame(&spec, Some(&ch), 9, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
