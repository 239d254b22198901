//! Transform coding with a learned prior: noise-relaxed training on
//! `λ·D + I`, hard rounding and table coding at deployment. The same type
//! serves refinement layers (four-row input, residual output).

use rand::Rng;

use super::{rate_estimate, round_latent, EntropyTable, FactorizedPrior};
use crate::error::{Error, Result};
use crate::latent::{assemble, latents_per_frame, latents_to_seq, reconstruction_loss, Autoencoder, AutoencoderShape, PreparedSet};
use crate::nn::Seq;
use crate::rng;
use crate::train::{Objective, StepStats};

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    pub ae: Autoencoder,
    pub prior: FactorizedPrior,
    pub lambda: f64,
    /// Decoder output is added to the previous layer's reconstruction.
    pub residual: bool,
    pub table: Option<EntropyTable>,
}

impl NeuralModel {
    pub fn new(shape: AutoencoderShape, lambda: f64, residual: bool, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::purpose::INIT, 0);
        let ae = Autoencoder::new(shape, &mut r);
        let prior = FactorizedPrior::new(shape.latent, &mut r);
        Self {
            ae,
            prior,
            lambda,
            residual,
            table: None,
        }
    }

    pub fn from_warm(ae: Autoencoder, lambda: f64, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::purpose::INIT, 1);
        let prior = FactorizedPrior::new(ae.shape.latent, &mut r);
        Self {
            ae,
            prior,
            lambda,
            residual: false,
            table: None,
        }
    }

    /// Unrounded latents per frame, time-major.
    pub fn latents(&self, set: &PreparedSet, idx: &[usize]) -> Result<Vec<Vec<f64>>> {
        let (z, _) = self.ae.encode(&set.input_seq(idx, self.residual)?)?;
        Ok(latents_per_frame(&z))
    }

    /// As [`latents`](Self::latents) with the previous-layer rows given
    /// explicitly instead of read from the set.
    pub fn latents_given(&self, set: &PreparedSet, idx: &[usize], prev: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        let x = match (self.residual, prev) {
            (true, Some(p)) => {
                let rows: Vec<&[f64]> = p.iter().map(Vec::as_slice).collect();
                set.input_seq_with(idx, Some(&rows))?
            }
            (true, None) => return Err(Error::Model("residual layer encoded without its base".into())),
            (false, _) => set.input_seq(idx, false)?,
        };
        let (z, _) = self.ae.encode(&x)?;
        Ok(latents_per_frame(&z))
    }

    /// Digest of the transform and prior parameters.
    pub fn digest(&self) -> String {
        format!("{}:{}", self.ae.params.digest(), self.prior.params.digest())
    }

    pub fn encode_symbols(&self, set: &PreparedSet, idx: &[usize]) -> Result<Vec<Vec<i64>>> {
        Ok(self.latents(set, idx)?.iter().map(|f| round_latent(f)).collect())
    }

    /// Scaled-domain reconstructions from (possibly rescaled) latents; for
    /// a residual layer `prev` holds the lower layers' reconstruction.
    pub fn decode_latents(&self, latents: &[Vec<f64>], prev: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        let (y, _) = self.ae.decode(&latents_to_seq(latents, self.ae.shape.latent))?;
        let mut rows = latents_per_frame(&y);
        match (self.residual, prev) {
            (true, Some(p)) => {
                for (r, p) in rows.iter_mut().zip(p) {
                    r.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                }
            }
            (true, None) => return Err(Error::Model("residual layer decoded without its base".into())),
            _ => {}
        }
        Ok(rows)
    }

    pub fn decode_symbols(&self, symbols: &[Vec<i64>], prev: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
        let z: Vec<Vec<f64>> = symbols.iter().map(|f| f.iter().map(|&v| v as f64).collect()).collect();
        self.decode_latents(&z, prev)
    }

    /// Builds the coding table from the rounded latents of `set`.
    pub fn build_table(&mut self, set: &PreparedSet, batch: usize) -> Result<()> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut all = Vec::new();
        for c in idx.chunks(batch.max(1)) {
            for f in self.encode_symbols(set, c)? {
                all.extend(f);
            }
        }
        self.table = Some(EntropyTable::build(&self.prior, &all)?);
        Ok(())
    }

    pub fn table(&self) -> Result<&EntropyTable> {
        self.table.as_ref().ok_or_else(|| Error::Model("entropy table has not been built".into()))
    }
}

/// Adds `U(−½, ½)` noise drawn per frame from `(seed, frame index)`.
pub(crate) fn add_noise(z: &mut Seq, idx: &[usize], seed: u64) {
    let f = z.features;
    for (b, &i) in idx.iter().enumerate() {
        let mut r = rng::stream(seed, rng::purpose::NOISE, i as u64);
        for t in 0..z.steps {
            for v in 0..f {
                z.at_mut(t, b)[v] += r.gen_range(-0.5..0.5);
            }
        }
    }
}

impl Objective for NeuralModel {
    fn read_params(&self) -> Vec<f64> {
        let mut v = self.ae.params.data.clone();
        v.extend_from_slice(&self.prior.params.data);
        v
    }

    fn write_params(&mut self, theta: &[f64]) {
        let n = self.ae.params.len();
        self.ae.params.data.copy_from_slice(&theta[..n]);
        self.prior.params.data.copy_from_slice(&theta[n..]);
    }

    fn evaluate(&self, set: &PreparedSet, idx: &[usize], noise: Option<u64>, grad: Option<&mut [f64]>, scale: f64) -> Result<StepStats> {
        let x = set.input_seq(idx, self.residual)?;
        let (z, ec) = self.ae.encode(&x)?;
        let mut zt = z.clone();
        match noise {
            Some(seed) => add_noise(&mut zt, idx, seed),
            None => zt.data.iter_mut().for_each(|v| *v = (*v + 0.5).floor()),
        }
        let (y, dc) = self.ae.decode(&zt)?;
        let s_hat = assemble(set, idx, &y, self.residual);
        let (errors, dy) = reconstruction_loss(set, idx, &s_hat, grad.is_some().then_some(scale * self.lambda));
        let d = errors.iter().map(|e| e.normalized()).sum::<f64>() / errors.len().max(1) as f64;
        let rate = match (grad, dy) {
            (Some(g), Some(dy)) => {
                let n_ae = self.ae.params.len();
                let (g_ae, g_phi) = g.split_at_mut(n_ae);
                let mut dz = self.ae.decode_backward(g_ae, &zt, &dc, &dy);
                let mut dr = vec![0.0; zt.data.len()];
                let mut dphi = vec![0.0; g_phi.len()];
                let rate = rate_estimate(&zt.data, &self.prior, Some(&mut dr), Some(&mut dphi));
                dz.data.iter_mut().zip(&dr).for_each(|(a, b)| *a += scale * b);
                g_phi.iter_mut().zip(&dphi).for_each(|(a, b)| *a += scale * b);
                self.ae.encode_backward(g_ae, &x, &ec, &dz);
                rate
            }
            _ => rate_estimate(&zt.data, &self.prior, None, None),
        };
        Ok(StepStats {
            frames: idx.len(),
            loss: self.lambda * d + rate,
            distortion: d,
            rate,
            errors,
            usage: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::tests::small_set;
    use crate::nn::gradcheck::{max_rel_error, probes};
    use crate::signal::Scenario;

    #[test]
    fn rd_loss_gradient_all_parameters() {
        // With the relaxation noise fixed, the objective is smooth in every
        // parameter: encoder, decoder and prior.
        let set = small_set(Scenario::Downlink, 3);
        let mut m = NeuralModel::new(AutoencoderShape::new(2, 2, 3, 1).with_latent_map(4.0, 0.3), 50.0, false, 4);
        let idx = [0, 2];
        let noise = Some(9);
        let mut g = vec![0.0; m.read_params().len()];
        m.evaluate(&set, &idx, noise, Some(&mut g), 1.0).unwrap();
        let mut theta = m.read_params();
        let pr = probes(theta.len(), 80, 2);
        let err = max_rel_error(&mut theta, &g, &pr, 1e-4, |v| {
            m.write_params(v);
            m.evaluate(&set, &idx, noise, None, 1.0).unwrap().loss
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn refinement_loss_gradient() {
        let mut set = small_set(Scenario::Uplink, 3);
        let prev: Vec<Vec<f64>> = set.frames.iter().map(|f| f.s.iter().map(|v| 0.8 * v).collect()).collect();
        set.set_prev(prev);
        let mut m = NeuralModel::new(AutoencoderShape::new(4, 2, 3, 1), 1e3, true, 5);
        let idx = [1, 2];
        let mut g = vec![0.0; m.read_params().len()];
        m.evaluate(&set, &idx, Some(3), Some(&mut g), 1.0).unwrap();
        let mut theta = m.read_params();
        let pr = probes(theta.len(), 80, 4);
        let err = max_rel_error(&mut theta, &g, &pr, 1e-4, |v| {
            m.write_params(v);
            m.evaluate(&set, &idx, Some(3), None, 1.0).unwrap().loss
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn zero_residual_keeps_previous_layer() {
        let mut set = small_set(Scenario::Downlink, 2);
        let prev: Vec<Vec<f64>> = set.frames.iter().map(|f| f.s.iter().map(|v| 0.5 * v).collect()).collect();
        set.set_prev(prev.clone());
        let mut m = NeuralModel::new(AutoencoderShape::new(4, 2, 3, 1), 1e3, true, 6);
        m.ae.params.data[m.ae.encoder_len..].iter_mut().for_each(|v| *v = 0.0);
        let out = m.decode_symbols(&m.encode_symbols(&set, &[0, 1]).unwrap(), Some(&prev)).unwrap();
        assert_eq!(out, prev);
    }

    #[test]
    fn deployed_path_matches_symbol_decode() {
        let set = small_set(Scenario::Downlink, 3);
        let mut m = NeuralModel::new(AutoencoderShape::new(2, 2, 3, 1), 100.0, false, 7);
        m.ae.params.data.iter_mut().for_each(|v| *v *= 8.0);
        m.build_table(&set, 2).unwrap();
        let sym = m.encode_symbols(&set, &[0, 1]).unwrap();
        let rec = m.decode_symbols(&sym, None).unwrap();
        let (errs, _) = reconstruction_loss(&set, &[0, 1], &rec, None);
        let st = m.evaluate(&set, &[0, 1], None, None, 1.0).unwrap();
        assert_eq!(errs, st.errors);
        let table = m.table().unwrap();
        for f in &sym {
            let coded = table.encode(f);
            assert_eq!(&table.decode(&coded.bytes, f.len()).unwrap(), f);
        }
    }
}
