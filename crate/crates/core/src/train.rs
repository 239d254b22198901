//! Training loop shared by every learned scheme: shuffled mini-batches,
//! Adam, plateau decay on the validation loss, checkpoints and resume.
//!
//! All randomness is drawn from streams keyed by (seed, purpose, index), so
//! a resumed run replays the uninterrupted one exactly. A batch may be
//! split across threads; the partial gradients are summed in chunk order,
//! so results depend on the thread count but not on scheduling.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{accumulate, FrameError, PreparedSet};
use crate::nn::{Adam, Plateau};
use crate::rng;

/// Outcome of evaluating an objective on a batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepStats {
    /// Frames evaluated.
    pub frames: usize,
    pub loss: f64,
    /// Mean normalized occupied-band error.
    pub distortion: f64,
    /// Estimated bits per latent element (0 for fixed-rate schemes).
    pub rate: f64,
    pub errors: Vec<FrameError>,
    /// Codebook row usage counts, when the scheme has a codebook.
    pub usage: Option<Vec<u64>>,
}

impl StepStats {
    /// Frame-weighted merge of disjoint batch chunks.
    pub fn merge(parts: Vec<StepStats>) -> StepStats {
        let total: usize = parts.iter().map(|p| p.frames).sum::<usize>().max(1);
        let mut out = StepStats::default();
        for p in parts {
            let w = p.frames as f64 / total as f64;
            out.frames += p.frames;
            out.loss += w * p.loss;
            out.distortion += w * p.distortion;
            out.rate += w * p.rate;
            out.errors.extend(p.errors);
            if let Some(u) = p.usage {
                match out.usage.as_mut() {
                    Some(acc) => acc.iter_mut().zip(&u).for_each(|(a, b)| *a += b),
                    None => out.usage = Some(u),
                }
            }
        }
        out
    }
}

/// A trainable scheme seen as one flat parameter vector.
pub trait Objective: Sync {
    fn read_params(&self) -> Vec<f64>;
    fn write_params(&mut self, theta: &[f64]);

    /// Loss on frames `idx`. `noise = Some(seed)` selects the training-time
    /// relaxation, with per-frame randomness keyed by `seed` and the frame
    /// index; `None` selects the deployed (hard-quantized) path. When `grad`
    /// is given, `scale·∂loss/∂θ` is accumulated into it.
    fn evaluate(&self, set: &PreparedSet, idx: &[usize], noise: Option<u64>, grad: Option<&mut [f64]>, scale: f64) -> Result<StepStats>;

    /// Hook after every optimizer step; returns true if it changed the
    /// parameters.
    fn after_step(&mut self, _step: u64, _set: &PreparedSet, _stats: &StepStats) -> Result<bool> {
        Ok(false)
    }

    /// Per-epoch diagnostic line, resetting any epoch counters.
    fn end_epoch(&mut self) -> Option<String> {
        None
    }

    /// Non-parameter state that a checkpoint must carry.
    fn state(&self) -> serde_json::Value {
        serde_json::Value::Null
    }

    fn restore(&mut self, _state: &serde_json::Value) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub decay: f64,
    pub seed: u64,
    #[serde(default = "one")]
    pub threads: usize,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub resume: bool,
}

fn one() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            lr: 1e-4,
            patience: 20,
            decay: 0.8,
            seed: 0,
            threads: 1,
            checkpoint: None,
            resume: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_distortion: f64,
    pub val_rate: f64,
    pub val_evm_db: f64,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochLog>,
    pub steps: u64,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    epochs_done: usize,
    step: u64,
    theta: Vec<f64>,
    adam: Adam,
    plateau: Plateau,
    history: Vec<EpochLog>,
    state: serde_json::Value,
}

fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let json = serde_json::to_vec(ck).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Evaluates `idx` split into `threads` contiguous chunks.
pub fn evaluate_batch<O: Objective + ?Sized>(
    obj: &O,
    set: &PreparedSet,
    idx: &[usize],
    noise: Option<u64>,
    grad: Option<&mut [f64]>,
    threads: usize,
) -> Result<StepStats> {
    let threads = threads.clamp(1, idx.len().max(1));
    if threads == 1 {
        return obj.evaluate(set, idx, noise, grad, 1.0);
    }
    let chunk = idx.len().div_ceil(threads);
    let len = grad.as_ref().map(|g| g.len());
    let results: Vec<Result<(StepStats, Option<Vec<f64>>)>> = std::thread::scope(|s| {
        let handles: Vec<_> = idx
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut g = len.map(|n| vec![0.0; n]);
                    let scale = part.len() as f64 / idx.len() as f64;
                    let st = obj.evaluate(set, part, noise, g.as_deref_mut(), scale)?;
                    Ok((st, g))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut parts = Vec::with_capacity(results.len());
    let mut grad = grad;
    for r in results {
        let (st, g) = r?;
        if let (Some(acc), Some(g)) = (grad.as_deref_mut(), g) {
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        parts.push(st);
    }
    Ok(StepStats::merge(parts))
}

/// Evaluates a whole set in batches.
pub fn evaluate_set<O: Objective + ?Sized>(obj: &O, set: &PreparedSet, noise: Option<u64>, batch: usize, threads: usize) -> Result<StepStats> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let parts = idx
        .chunks(batch.max(1))
        .map(|b| evaluate_batch(obj, set, b, noise, None, threads))
        .collect::<Result<Vec<_>>>()?;
    Ok(StepStats::merge(parts))
}

/// Seed of the fixed relaxation used for validation losses.
fn validation_noise(seed: u64) -> u64 {
    rng::derive_seed(seed, rng::purpose::NOISE, u64::MAX)
}

pub fn train<O: Objective + ?Sized>(obj: &mut O, train: &PreparedSet, val: &PreparedSet, cfg: &TrainConfig) -> Result<TrainReport> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training needs non-empty train and validation sets".into()));
    }
    if cfg.batch_size == 0 || cfg.lr <= 0.0 {
        return Err(Error::Config("batch size and learning rate must be positive".into()));
    }
    let started = Instant::now();
    let mut theta = obj.read_params();
    let mut adam = Adam::new(theta.len(), cfg.lr);
    let mut plateau = Plateau::new(cfg.patience, cfg.decay);
    let mut history = Vec::new();
    let mut step = 0u64;
    let mut start = 0;
    if let (true, Some(path)) = (cfg.resume, cfg.checkpoint.as_ref()) {
        if path.exists() {
            let ck = load_checkpoint(path)?;
            if ck.theta.len() != theta.len() {
                return Err(Error::Format("checkpoint does not match the model".into()));
            }
            theta = ck.theta;
            obj.write_params(&theta);
            obj.restore(&ck.state)?;
            adam = ck.adam;
            plateau = ck.plateau;
            history = ck.history;
            step = ck.step;
            start = ck.epochs_done;
            info!("resumed from {} after epoch {start}", path.display());
        }
    }
    let mut last_good = theta.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in start..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng::stream(cfg.seed, rng::purpose::SHUFFLE, epoch as u64));
        let mut train_loss = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut grad = vec![0.0; theta.len()];
            let noise = rng::derive_seed(cfg.seed, rng::purpose::NOISE, step);
            let stats = evaluate_batch(obj, train, batch, Some(noise), Some(&mut grad), cfg.threads)?;
            if !stats.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                obj.write_params(&last_good);
                return Err(Error::NumericalFailure {
                    step: step as usize,
                    what: format!("non-finite loss or gradient in epoch {}; parameters restored to the last good epoch", epoch + 1),
                });
            }
            adam.step(&mut theta, &grad);
            if theta.iter().any(|v| !v.is_finite()) {
                obj.write_params(&last_good);
                return Err(Error::NumericalFailure {
                    step: step as usize,
                    what: "non-finite parameters after the optimizer step".into(),
                });
            }
            obj.write_params(&theta);
            step += 1;
            if obj.after_step(step, train, &stats)? {
                theta = obj.read_params();
            }
            train_loss += stats.loss * batch.len() as f64;
            seen += batch.len();
        }
        let v = evaluate_set(obj, val, Some(validation_noise(cfg.seed)), cfg.batch_size, cfg.threads)?;
        let evm_db = if v.errors.is_empty() {
            f64::NAN
        } else {
            accumulate(&v.errors).finish()?.db
        };
        adam.lr = plateau.observe(v.loss, adam.lr);
        let note = obj.end_epoch();
        let log = EpochLog {
            epoch: epoch + 1,
            lr: adam.lr,
            train_loss: train_loss / seen.max(1) as f64,
            val_loss: v.loss,
            val_distortion: v.distortion,
            val_rate: v.rate,
            val_evm_db: evm_db,
            note,
        };
        info!(
            "epoch {:>3}: train {:.5} val {:.5} D {:.3e} rate {:.3} EVM {:.2} dB lr {:.2e}{}",
            log.epoch,
            log.train_loss,
            log.val_loss,
            log.val_distortion,
            log.val_rate,
            log.val_evm_db,
            log.lr,
            log.note.as_deref().map(|n| format!(" | {n}")).unwrap_or_default()
        );
        history.push(log);
        last_good = theta.clone();
        if let Some(path) = &cfg.checkpoint {
            let ck = Checkpoint {
                epochs_done: epoch + 1,
                step,
                theta: theta.clone(),
                adam: adam.clone(),
                plateau: plateau.clone(),
                history: history.clone(),
                state: obj.state(),
            };
            if let Err(e) = save_checkpoint(path, &ck) {
                warn!("checkpoint not written: {e}");
            }
        }
    }
    Ok(TrainReport {
        history,
        steps: step,
        wall_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::tests::small_set;
    use crate::latent::{AutoencoderShape, LatentUniformModel};
    use crate::signal::Scenario;

    fn cfg(epochs: usize, threads: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            lr: 3e-3,
            seed: 11,
            threads,
            ..TrainConfig::default()
        }
    }

    fn model() -> LatentUniformModel {
        LatentUniformModel::new(AutoencoderShape::new(2, 2, 4, 1), 4, 3)
    }

    #[test]
    fn same_seed_same_trajectory() {
        let set = small_set(Scenario::Downlink, 10);
        let val = small_set(Scenario::Downlink, 3);
        let mut a = model();
        let mut b = model();
        let ra = train(&mut a, &set, &val, &cfg(2, 1)).unwrap();
        let rb = train(&mut b, &set, &val, &cfg(2, 1)).unwrap();
        assert_eq!(a.read_params(), b.read_params());
        assert_eq!(ra.history, rb.history);
    }

    #[test]
    fn resume_replays_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let set = small_set(Scenario::Downlink, 10);
        let val = small_set(Scenario::Downlink, 3);
        let mut straight = model();
        train(&mut straight, &set, &val, &cfg(3, 1)).unwrap();

        let mut c = cfg(1, 1);
        c.checkpoint = Some(dir.path().join("ck.json"));
        let mut first = model();
        train(&mut first, &set, &val, &c).unwrap();
        c.epochs = 3;
        c.resume = true;
        let mut resumed = model();
        let rep = train(&mut resumed, &set, &val, &c).unwrap();
        assert_eq!(rep.history.len(), 3);
        assert_eq!(resumed.read_params(), straight.read_params());
    }

    #[test]
    fn threaded_batches_match_serial_closely() {
        let set = small_set(Scenario::Downlink, 8);
        let m = model();
        let idx: Vec<usize> = (0..8).collect();
        let mut g1 = vec![0.0; m.read_params().len()];
        let mut g2 = g1.clone();
        let s1 = evaluate_batch(&m, &set, &idx, Some(1), Some(&mut g1), 1).unwrap();
        let s2 = evaluate_batch(&m, &set, &idx, Some(1), Some(&mut g2), 3).unwrap();
        assert!((s1.loss - s2.loss).abs() < 1e-12);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()));
        }
    }
}
