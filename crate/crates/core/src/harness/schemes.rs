//! Training each scheme from prepared splits.

use log::info;
use serde_json::json;

use super::config::{SchemeConfig, SchemeKind};
use crate::advanced::{RefinementStack, VariableRateSet};
use crate::classical::{train_scalar, train_vector};
use crate::codec::Codec;
use crate::entropy::NeuralModel;
use crate::error::{Error, Result};
use crate::latent::model::VqSchedule;
use crate::latent::{Autoencoder, LatentUniformModel, LatentVqModel, PreparedSet};
use crate::rng;
use crate::train::{evaluate_set, train, Objective, TrainConfig, TrainReport};

/// Convergence tolerance of the Lloyd iterations.
pub const LLOYD_TOL: f64 = 1e-9;

/// A trained codec and its training log.
#[derive(Debug, Clone)]
pub struct Trained {
    pub codec: Codec,
    pub history: serde_json::Value,
}

fn reports(r: &[TrainReport]) -> serde_json::Value {
    serde_json::to_value(r).unwrap_or(serde_json::Value::Null)
}

fn samples(set: &PreparedSet) -> Vec<f64> {
    set.frames.iter().flat_map(|f| f.s.iter().copied()).collect()
}

/// Autoencoder trained without quantization; the shared starting point of
/// both fixed-rate latent schemes.
pub fn train_warm(scheme: &SchemeConfig, train_set: &PreparedSet, val_set: &PreparedSet, cfg: &TrainConfig) -> Result<(Autoencoder, TrainReport)> {
    let shape = scheme.shape(2);
    let schedule = VqSchedule {
        warmup_steps: u64::MAX,
        ..scheme.vq
    };
    let mut m = LatentVqModel::new(shape, scheme.block_dim, 1, scheme.beta, schedule, cfg.seed)?;
    let cfg = TrainConfig {
        epochs: scheme.warm_epochs,
        checkpoint: None,
        resume: false,
        ..cfg.clone()
    };
    info!("warm-up: {} epochs without quantization", cfg.epochs);
    let report = train(&mut m, train_set, val_set, &cfg)?;
    Ok((m.ae, report))
}

/// Trains `scheme`. `warm` supplies a pre-trained autoencoder for the
/// fixed-rate latent schemes; without one, a warm-up runs first when
/// `warm_epochs > 0`, and quantized fine-tuning then runs at
/// `lr · fine_tune_lr_factor`.
pub fn train_scheme(
    scheme: &SchemeConfig,
    train_set: &PreparedSet,
    val_set: &PreparedSet,
    cfg: &TrainConfig,
    warm: Option<&Autoencoder>,
) -> Result<Trained> {
    match scheme.kind {
        SchemeKind::ClassicalScalar => {
            let (cb, trace) = train_scalar(&samples(train_set), scheme.q_bits, scheme.lloyd_iters, LLOYD_TOL)?;
            Ok(Trained {
                codec: Codec::Scalar(cb),
                history: json!({ "lloyd": trace }),
            })
        }
        SchemeKind::ClassicalVector | SchemeKind::ClassicalVectorFixed => {
            let mut r = rng::stream(cfg.seed, rng::purpose::KMEANS, 0);
            let (codebook, trace) = train_vector(&samples(train_set), scheme.block_dim, scheme.q_bits, scheme.lloyd_iters, LLOYD_TOL, &mut r)?;
            Ok(Trained {
                codec: Codec::Vector {
                    codebook,
                    entropy_coded: scheme.kind == SchemeKind::ClassicalVector,
                },
                history: json!({ "lloyd": trace }),
            })
        }
        SchemeKind::LatentUniform | SchemeKind::LatentVq => {
            let mut log = Vec::new();
            let ae = match warm {
                Some(ae) => Some(ae.clone()),
                None if scheme.warm_epochs > 0 => {
                    let (ae, r) = train_warm(scheme, train_set, val_set, cfg)?;
                    log.push(r);
                    Some(ae)
                }
                None => None,
            };
            let fine = TrainConfig {
                lr: if ae.is_some() { cfg.lr * scheme.fine_tune_lr_factor } else { cfg.lr },
                ..cfg.clone()
            };
            let cfg = &fine;
            let fine_kept;
            let codec = if scheme.kind == SchemeKind::LatentUniform {
                let m = match ae {
                    Some(ae) => LatentUniformModel { ae, q_bits: scheme.q_bits },
                    None => LatentUniformModel::new(scheme.shape(2), scheme.q_bits, cfg.seed),
                };
                let (m, r, kept) = fine_tune(m, train_set, val_set, cfg)?;
                log.push(r);
                fine_kept = kept;
                Codec::LatentUniform(m)
            } else {
                let m = match ae {
                    Some(ae) => {
                        let schedule = VqSchedule { warmup_steps: 0, ..scheme.vq };
                        let mut m = LatentVqModel::from_warm(ae, scheme.block_dim, scheme.q_bits, scheme.beta, schedule, cfg.seed)?;
                        m.init_codebook(train_set)?;
                        m
                    }
                    None => LatentVqModel::new(scheme.shape(2), scheme.block_dim, scheme.q_bits, scheme.beta, scheme.vq, cfg.seed)?,
                };
                let (m, r, kept) = fine_tune(m, train_set, val_set, cfg)?;
                log.push(r);
                fine_kept = kept;
                Codec::LatentVq(m)
            };
            Ok(Trained {
                codec,
                history: json!({ "reports": reports(&log), "fine_tune_kept": fine_kept }),
            })
        }
        SchemeKind::Neural => {
            let (m, r) = train_neural(scheme, scheme.lambda, train_set, val_set, cfg)?;
            Ok(Trained {
                codec: Codec::Neural(m),
                history: reports(&[r]),
            })
        }
        SchemeKind::Refinement => {
            let lambdas = &scheme.refinement_lambdas;
            let first = *lambdas.first().ok_or_else(|| Error::Config("refinement needs at least one λ".into()))?;
            let (base, r) = train_neural(scheme, first, train_set, val_set, cfg)?;
            let mut log = vec![r];
            let mut stack = RefinementStack::new(base)?;
            for &l in &lambdas[1..] {
                log.push(stack.train_layer(scheme.shape(4), l, train_set, val_set, cfg)?);
            }
            let layers = stack.len();
            Ok(Trained {
                codec: Codec::Refinement { stack, layers },
                history: reports(&log),
            })
        }
        SchemeKind::VariableRate => {
            let (base, r) = train_neural(scheme, scheme.lambda, train_set, val_set, cfg)?;
            let mut log = vec![r];
            let mut set = VariableRateSet::new(base, &scheme.rate_scales, cfg.seed)?;
            for w in 0..set.levels.len() {
                if set.levels[w].table.is_none() {
                    log.push(set.train_level(w, train_set, val_set, cfg)?);
                }
            }
            let rate = set.levels.len() - 1;
            Ok(Trained {
                codec: Codec::VariableRate { set, rate },
                history: reports(&log),
            })
        }
    }
}

/// Quantized training from `m`. The result is kept only if its
/// hard-quantized validation distortion beats the starting point's;
/// otherwise the starting model is returned with `false`.
fn fine_tune<O: Objective + Clone>(m: O, train_set: &PreparedSet, val_set: &PreparedSet, cfg: &TrainConfig) -> Result<(O, TrainReport, bool)> {
    let before = evaluate_set(&m, val_set, None, cfg.batch_size, cfg.threads)?.distortion;
    let mut tuned = m.clone();
    let r = train(&mut tuned, train_set, val_set, cfg)?;
    let after = evaluate_set(&tuned, val_set, None, cfg.batch_size, cfg.threads)?.distortion;
    info!("quantized validation distortion {before:.4e} before fine-tuning, {after:.4e} after");
    if after <= before {
        Ok((tuned, r, true))
    } else {
        Ok((m, r, false))
    }
}

/// Trains a base transform-coding model at `lambda` and builds its table.
pub fn train_neural(scheme: &SchemeConfig, lambda: f64, train_set: &PreparedSet, val_set: &PreparedSet, cfg: &TrainConfig) -> Result<(NeuralModel, TrainReport)> {
    let mut m = NeuralModel::new(scheme.shape(2), lambda, false, cfg.seed);
    info!("training transform coder at lambda {lambda}");
    let r = train(&mut m, train_set, val_set, cfg)?;
    m.build_table(train_set, cfg.batch_size)?;
    Ok((m, r))
}
