//! Trainable fixed-rate latent schemes.

use log::info;
use serde::{Deserialize, Serialize};

use super::quantize::{uniform_index, uniform_steps, LatentVqCodebook, VqTerms};
use super::{assemble, latents_per_frame, latents_to_seq, reconstruction_loss, Autoencoder, AutoencoderShape, PreparedSet};
use crate::classical::vector::{kmeans_pp, lloyd, nearest_row};
use crate::error::{Error, Result};
use crate::nn::Seq;
use crate::rng;
use crate::train::{Objective, StepStats};

fn mean_distortion(errs: &[super::FrameError]) -> f64 {
    errs.iter().map(|e| e.normalized()).sum::<f64>() / errs.len().max(1) as f64
}

/// Encoder → clipped uniform quantizer → decoder, trained through the
/// quantizer with an identity gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentUniformModel {
    pub ae: Autoencoder,
    pub q_bits: u32,
}

impl LatentUniformModel {
    pub fn new(shape: AutoencoderShape, q_bits: u32, seed: u64) -> Self {
        let mut r = rng::stream(seed, rng::purpose::INIT, 0);
        Self {
            ae: Autoencoder::new(shape, &mut r),
            q_bits,
        }
    }

    /// Level indices per frame, time-major (`t·V + v`).
    pub fn encode_indices(&self, set: &PreparedSet, idx: &[usize]) -> Result<Vec<Vec<u32>>> {
        let (z, _) = self.ae.encode(&set.input_seq(idx, false)?)?;
        Ok(latents_per_frame(&z)
            .into_iter()
            .map(|f| f.iter().map(|&v| uniform_index(v, self.q_bits)).collect())
            .collect())
    }

    /// Scaled-domain reconstructions from level indices.
    pub fn decode_indices(&self, indices: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        let steps = uniform_steps(self.q_bits);
        let zq: Vec<Vec<f64>> = indices.iter().map(|f| f.iter().map(|&i| i as f64 / steps).collect()).collect();
        let (y, _) = self.ae.decode(&latents_to_seq(&zq, self.ae.shape.latent))?;
        Ok(decoder_rows(&y))
    }
}

/// Decoder output as per-frame real-interleaved vectors.
pub(crate) fn decoder_rows(y: &Seq) -> Vec<Vec<f64>> {
    latents_per_frame(y)
}

impl Objective for LatentUniformModel {
    fn read_params(&self) -> Vec<f64> {
        self.ae.params.data.clone()
    }

    fn write_params(&mut self, theta: &[f64]) {
        self.ae.params.data.copy_from_slice(theta);
    }

    fn evaluate(&self, set: &PreparedSet, idx: &[usize], _noise: Option<u64>, grad: Option<&mut [f64]>, scale: f64) -> Result<StepStats> {
        let x = set.input_seq(idx, false)?;
        let (z, ec) = self.ae.encode(&x)?;
        let mut zq = z.clone();
        zq.data.iter_mut().for_each(|v| *v = super::uniform_latent_quantize(*v, self.q_bits));
        let (y, dc) = self.ae.decode(&zq)?;
        let s_hat = assemble(set, idx, &y, false);
        let (errors, dy) = reconstruction_loss(set, idx, &s_hat, grad.is_some().then_some(scale));
        if let (Some(g), Some(dy)) = (grad, dy) {
            // Straight-through: the gradient at ẑ is used as the gradient at z.
            let dz = self.ae.decode_backward(g, &zq, &dc, &dy);
            self.ae.encode_backward(g, &x, &ec, &dz);
        }
        let d = mean_distortion(&errors);
        Ok(StepStats {
            frames: idx.len(),
            loss: d,
            distortion: d,
            rate: 0.0,
            errors,
            usage: None,
        })
    }
}

/// Encoder → nearest codebook row per block → decoder, with codebook and
/// commitment terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVqModel {
    pub ae: Autoencoder,
    pub codebook: LatentVqCodebook,
    pub schedule: VqSchedule,
    pub progress: VqProgress,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqSchedule {
    /// Optimizer steps run without quantization before the codebook is
    /// seeded from the encoder's latents.
    pub warmup_steps: u64,
    /// Dead rows are re-seeded at this step interval.
    pub reseed_every: u64,
    /// Frames whose latents seed the codebook.
    pub init_frames: usize,
}

impl Default for VqSchedule {
    fn default() -> Self {
        Self {
            warmup_steps: 500,
            reseed_every: 200,
            init_frames: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VqProgress {
    pub initialized: bool,
    /// Row usage since the last re-seed.
    pub usage: Vec<u64>,
    /// Row usage in the current epoch.
    pub epoch_usage: Vec<u64>,
    pub reseeded: u64,
}

impl LatentVqModel {
    pub fn new(shape: AutoencoderShape, b: usize, q_bits: u32, beta: f64, schedule: VqSchedule, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, rng::purpose::INIT, 0);
        let codebook = LatentVqCodebook::zeroed(b, q_bits, beta)?;
        if (shape.latent * 2) % b != 0 && shape.latent % b != 0 {
            return Err(Error::Config(format!("block length {b} does not divide the latent layout")));
        }
        let rows = codebook.rows();
        Ok(Self {
            ae: Autoencoder::new(shape, &mut r),
            codebook,
            schedule,
            progress: VqProgress {
                usage: vec![0; rows],
                epoch_usage: vec![0; rows],
                ..VqProgress::default()
            },
            seed,
        })
    }

    /// Starts from an already trained autoencoder (shared warm-up).
    pub fn from_warm(ae: Autoencoder, b: usize, q_bits: u32, beta: f64, schedule: VqSchedule, seed: u64) -> Result<Self> {
        let mut m = Self::new(ae.shape, b, q_bits, beta, schedule, seed)?;
        m.ae = ae;
        Ok(m)
    }

    fn encode_flat(&self, set: &PreparedSet, idx: &[usize]) -> Result<Vec<Vec<f64>>> {
        let (z, _) = self.ae.encode(&set.input_seq(idx, false)?)?;
        Ok(latents_per_frame(&z))
    }

    /// Codebook row indices per frame.
    pub fn encode_indices(&self, set: &PreparedSet, idx: &[usize]) -> Result<Vec<Vec<usize>>> {
        self.encode_flat(set, idx)?
            .iter()
            .map(|f| self.codebook.quantize(f).map(|(_, i)| i))
            .collect()
    }

    pub fn decode_indices(&self, indices: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let rows = self.codebook.rows();
        let zq = indices
            .iter()
            .map(|f| {
                let mut out = Vec::with_capacity(f.len() * self.codebook.b);
                for &i in f {
                    if i >= rows {
                        return Err(Error::CorruptStream(format!("codebook index {i} out of range")));
                    }
                    out.extend_from_slice(self.codebook.row(i));
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let (y, _) = self.ae.decode(&latents_to_seq(&zq, self.ae.shape.latent))?;
        Ok(decoder_rows(&y))
    }

    /// Seeds the codebook by k-means++ plus a few Lloyd passes over the
    /// current encoder's latents.
    pub fn init_codebook(&mut self, set: &PreparedSet) -> Result<()> {
        let n = set.len().min(self.schedule.init_frames.max(1));
        let idx: Vec<usize> = (0..n).collect();
        let data: Vec<f64> = idx
            .chunks(32)
            .map(|c| self.encode_flat(set, c))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .flatten()
            .collect();
        let b = self.codebook.b;
        let k = self.codebook.rows();
        if data.len() / b < k {
            return Err(Error::Statistics(format!("{} latent blocks cannot seed {k} codebook rows", data.len() / b)));
        }
        let mut r = rng::stream(self.seed, rng::purpose::KMEANS, 0);
        let mut centres = kmeans_pp(&data, b, k, &mut r);
        lloyd(&data, b, &mut centres, 10, 1e-6, &mut r);
        self.codebook.e = centres;
        self.progress.initialized = true;
        info!("latent codebook seeded from {} blocks", data.len() / b);
        Ok(())
    }

    /// Moves rows unused since the last call onto the worst-quantized
    /// latents of a few training frames.
    fn reseed_dead(&mut self, step: u64, set: &PreparedSet) -> Result<usize> {
        let dead: Vec<usize> = (0..self.codebook.rows()).filter(|&r| self.progress.usage[r] == 0).collect();
        self.progress.usage.iter_mut().for_each(|u| *u = 0);
        if dead.is_empty() {
            return Ok(0);
        }
        let mut r = rng::stream(self.seed, rng::purpose::KMEANS, step);
        let picks: Vec<usize> = rand::seq::index::sample(&mut r, set.len(), set.len().min(8)).into_vec();
        let b = self.codebook.b;
        let mut cands: Vec<(f64, Vec<f64>)> = self
            .encode_flat(set, &picks)?
            .into_iter()
            .flat_map(|f| {
                f.chunks_exact(b)
                    .map(|blk| (nearest_row(&self.codebook.e, b, blk).1, blk.to_vec()))
                    .collect::<Vec<_>>()
            })
            .collect();
        cands.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (row, (_, v)) in dead.iter().zip(cands.iter()) {
            self.codebook.e[row * b..(row + 1) * b].copy_from_slice(v);
        }
        let moved = dead.len().min(cands.len());
        self.progress.reseeded += moved as u64;
        info!("step {step}: re-seeded {moved} dead codebook rows");
        Ok(moved)
    }
}

impl Objective for LatentVqModel {
    fn read_params(&self) -> Vec<f64> {
        let mut v = self.ae.params.data.clone();
        v.extend_from_slice(&self.codebook.e);
        v
    }

    fn write_params(&mut self, theta: &[f64]) {
        let n = self.ae.params.len();
        self.ae.params.data.copy_from_slice(&theta[..n]);
        self.codebook.e.copy_from_slice(&theta[n..]);
    }

    fn evaluate(&self, set: &PreparedSet, idx: &[usize], noise: Option<u64>, grad: Option<&mut [f64]>, scale: f64) -> Result<StepStats> {
        let x = set.input_seq(idx, false)?;
        let (z, ec) = self.ae.encode(&x)?;
        let quantize = noise.is_none() || self.progress.initialized;
        let dim = self.ae.shape.latent;
        let flat = latents_per_frame(&z);
        let mut usage = vec![0u64; self.codebook.rows()];
        let mut assign = Vec::with_capacity(flat.len());
        let zq = if quantize {
            let mut q = Vec::with_capacity(flat.len());
            for f in &flat {
                let (zh, a) = self.codebook.quantize(f)?;
                a.iter().for_each(|&i| usage[i] += 1);
                q.push(zh);
                assign.push(a);
            }
            latents_to_seq(&q, dim)
        } else {
            z.clone()
        };
        let (y, dc) = self.ae.decode(&zq)?;
        let s_hat = assemble(set, idx, &y, false);
        let (errors, dy) = reconstruction_loss(set, idx, &s_hat, grad.is_some().then_some(scale));
        let n_ae = self.ae.params.len();
        let mut terms = VqTerms::default();
        // Per-frame means averaged over the batch equal the batch mean,
        // since every frame has the same number of latents.
        let per = 1.0 / flat.len().max(1) as f64;
        match (grad, dy) {
            (Some(g), Some(dy)) => {
                let (g_ae, g_cb) = g.split_at_mut(n_ae);
                let mut dz = self.ae.decode_backward(g_ae, &zq, &dc, &dy);
                if quantize {
                    let mut dz_flat = vec![vec![0.0; flat[0].len()]; flat.len()];
                    for ((f, a), d) in flat.iter().zip(&assign).zip(dz_flat.iter_mut()) {
                        let t = self.codebook.aux_terms(f, a, scale * per, Some(d), Some(g_cb));
                        terms.codebook += per * t.codebook;
                        terms.commitment += per * t.commitment;
                    }
                    let extra = latents_to_seq(&dz_flat, dim);
                    dz.data.iter_mut().zip(&extra.data).for_each(|(a, b)| *a += b);
                }
                self.ae.encode_backward(g_ae, &x, &ec, &dz);
            }
            _ => {
                if quantize {
                    for (f, a) in flat.iter().zip(&assign) {
                        let t = self.codebook.aux_terms(f, a, 1.0, None, None);
                        terms.codebook += per * t.codebook;
                        terms.commitment += per * t.commitment;
                    }
                }
            }
        }
        let d = mean_distortion(&errors);
        Ok(StepStats {
            frames: idx.len(),
            loss: d + terms.codebook + terms.commitment,
            distortion: d,
            rate: 0.0,
            errors,
            usage: quantize.then_some(usage),
        })
    }

    fn after_step(&mut self, step: u64, set: &PreparedSet, stats: &StepStats) -> Result<bool> {
        if !self.progress.initialized {
            if step >= self.schedule.warmup_steps {
                self.init_codebook(set)?;
                return Ok(true);
            }
            return Ok(false);
        }
        if let Some(u) = &stats.usage {
            for (i, c) in u.iter().enumerate() {
                self.progress.usage[i] += c;
                self.progress.epoch_usage[i] += c;
            }
        }
        if self.schedule.reseed_every > 0 && step % self.schedule.reseed_every == 0 {
            return Ok(self.reseed_dead(step, set)? > 0);
        }
        Ok(false)
    }

    fn end_epoch(&mut self) -> Option<String> {
        if !self.progress.initialized {
            return Some("codebook warm-up".into());
        }
        let used = self.progress.epoch_usage.iter().filter(|&&c| c > 0).count();
        let rows = self.codebook.rows();
        self.progress.epoch_usage.iter_mut().for_each(|c| *c = 0);
        Some(format!(
            "codebook utilization {:.1}% ({used}/{rows}), re-seeded {} total",
            100.0 * used as f64 / rows as f64,
            self.progress.reseeded
        ))
    }

    fn state(&self) -> serde_json::Value {
        serde_json::to_value(&self.progress).expect("progress serializes")
    }

    fn restore(&mut self, state: &serde_json::Value) -> Result<()> {
        self.progress = serde_json::from_value(state.clone()).map_err(|e| Error::Format(e.to_string()))?;
        Ok(())
    }
}
