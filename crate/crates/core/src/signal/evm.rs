use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reported in place of +∞ dB when the reconstruction is exact.
pub const EVM_DB_SENTINEL: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evm {
    pub percent: f64,
    pub db: f64,
}

impl Evm {
    fn from_energies(error: f64, reference: f64) -> Result<Self> {
        if reference <= 0.0 {
            return Err(Error::UndefinedMetric(
                "reference energy on the occupied set is zero".into(),
            ));
        }
        let ratio = error / reference;
        let percent = ratio.sqrt() * 100.0;
        let db = if ratio > 0.0 {
            (-10.0 * ratio.log10()).min(EVM_DB_SENTINEL)
        } else {
            EVM_DB_SENTINEL
        };
        Ok(Self { percent, db })
    }
}

/// EVM of `reconstructed` against `original`, restricted to `occupied`.
/// Both inputs are full frequency-domain vectors.
pub fn evm(original: &[Complex64], reconstructed: &[Complex64], occupied: &[usize]) -> Result<Evm> {
    let mut acc = EvmAccumulator::default();
    acc.add_indexed(original, reconstructed, occupied)?;
    acc.finish()
}

/// Dataset-level EVM: numerators and denominators are summed over frames
/// before taking the ratio.
#[derive(Debug, Clone, Default)]
pub struct EvmAccumulator {
    error: f64,
    reference: f64,
    per_frame_db: Vec<f64>,
}

impl EvmAccumulator {
    pub fn add_indexed(&mut self, original: &[Complex64], reconstructed: &[Complex64], occupied: &[usize]) -> Result<()> {
        if original.len() != reconstructed.len() {
            return Err(Error::InputShape(format!(
                "EVM inputs differ in length ({} vs {})",
                original.len(),
                reconstructed.len()
            )));
        }
        let mut err = 0.0;
        let mut refe = 0.0;
        for &k in occupied {
            let (x, y) = original
                .get(k)
                .zip(reconstructed.get(k))
                .ok_or_else(|| Error::InputShape(format!("occupied index {k} out of range")))?;
            err += (y - x).norm_sqr();
            refe += x.norm_sqr();
        }
        self.add_energies(err, refe);
        Ok(())
    }

    /// Adds a frame already restricted to the occupied set.
    pub fn add_occupied(&mut self, original: &[Complex64], reconstructed: &[Complex64]) -> Result<()> {
        if original.len() != reconstructed.len() {
            return Err(Error::InputShape("EVM inputs differ in length".into()));
        }
        let err = original.iter().zip(reconstructed).map(|(x, y)| (y - x).norm_sqr()).sum();
        let refe = original.iter().map(|x| x.norm_sqr()).sum();
        self.add_energies(err, refe);
        Ok(())
    }

    /// Adds one frame given its error and reference energies.
    pub fn add_energies(&mut self, err: f64, refe: f64) {
        self.error += err;
        self.reference += refe;
        if refe > 0.0 {
            let r = err / refe;
            self.per_frame_db.push(if r > 0.0 { (-10.0 * r.log10()).min(EVM_DB_SENTINEL) } else { EVM_DB_SENTINEL });
        }
    }

    pub fn frames(&self) -> usize {
        self.per_frame_db.len()
    }

    pub fn finish(&self) -> Result<Evm> {
        Evm::from_energies(self.error, self.reference)
    }

    /// Per-frame EVM (dB) at percentile `p` in [0, 100].
    pub fn percentile_db(&self, p: f64) -> Option<f64> {
        if self.per_frame_db.is_empty() {
            return None;
        }
        let mut v = self.per_frame_db.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        let idx = ((p / 100.0) * (v.len() - 1) as f64).round() as usize;
        Some(v[idx.min(v.len() - 1)])
    }
}
