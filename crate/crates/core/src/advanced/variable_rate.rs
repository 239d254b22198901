//! One shared transform serving several rates: latents are scaled by `a`
//! before rounding and by `1/a` after, with a prior and table per rate.

use log::info;
use rand::Rng;

use crate::entropy::{rate_estimate, round_latent, EntropyTable, FactorizedPrior, NeuralModel};
use crate::error::{Error, Result};
use crate::latent::PreparedSet;
use crate::rng;
use crate::train::{train, Objective, StepStats, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq)]
pub struct RateLevel {
    pub a: f64,
    pub prior: FactorizedPrior,
    pub table: Option<EntropyTable>,
}

impl RateLevel {
    pub fn b(&self) -> f64 {
        1.0 / self.a
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableRateSet {
    pub base: NeuralModel,
    pub levels: Vec<RateLevel>,
}

/// `⌊a·z + ½⌋` elementwise.
pub fn scaled_symbols(z: &[f64], a: f64) -> Vec<i64> {
    round_latent(&z.iter().map(|v| a * v).collect::<Vec<_>>())
}

impl VariableRateSet {
    /// Levels with `a = 1` share the base prior and table; the others start
    /// from a fresh prior and must be trained.
    pub fn new(base: NeuralModel, scales: &[f64], seed: u64) -> Result<Self> {
        if scales.is_empty() || scales.windows(2).any(|w| w[0] >= w[1]) || scales[0] <= 0.0 || *scales.last().unwrap() != 1.0 {
            return Err(Error::Config("rate scales must increase strictly within (0, 1] and end at 1".into()));
        }
        for &a in scales {
            if (1.0 / a) * a != 1.0 {
                return Err(Error::Config(format!("scale {a} has no exact reciprocal in binary64")));
            }
        }
        base.table()?;
        let levels = scales
            .iter()
            .enumerate()
            .map(|(w, &a)| {
                if a == 1.0 {
                    RateLevel {
                        a,
                        prior: base.prior.clone(),
                        table: base.table.clone(),
                    }
                } else {
                    let mut r = rng::stream(seed, rng::purpose::INIT, 100 + w as u64);
                    RateLevel {
                        a,
                        prior: FactorizedPrior::new(base.ae.shape.latent, &mut r),
                        table: None,
                    }
                }
            })
            .collect();
        Ok(Self { base, levels })
    }

    fn level(&self, w: usize) -> Result<&RateLevel> {
        self.levels
            .get(w)
            .ok_or_else(|| Error::Model(format!("rate index {w} out of range ({} levels)", self.levels.len())))
    }

    pub fn table(&self, w: usize) -> Result<&EntropyTable> {
        self.level(w)?
            .table
            .as_ref()
            .ok_or_else(|| Error::Model(format!("rate {w} has no entropy table yet")))
    }

    pub fn encode_symbols(&self, set: &PreparedSet, idx: &[usize], w: usize) -> Result<Vec<Vec<i64>>> {
        let a = self.level(w)?.a;
        Ok(self.base.latents(set, idx)?.iter().map(|z| scaled_symbols(z, a)).collect())
    }

    pub fn decode_symbols(&self, symbols: &[Vec<i64>], w: usize) -> Result<Vec<Vec<f64>>> {
        let b = self.level(w)?.b();
        let z: Vec<Vec<f64>> = symbols.iter().map(|f| f.iter().map(|&v| b * v as f64).collect()).collect();
        self.base.decode_latents(&z, None)
    }

    /// Caches base-encoder latents on a copy of `set`.
    fn with_latents(&self, set: &PreparedSet, batch: usize) -> Result<PreparedSet> {
        let mut out = set.clone();
        let idx: Vec<usize> = (0..set.len()).collect();
        for c in idx.chunks(batch.max(1)) {
            for (&i, z) in c.iter().zip(self.base.latents(set, c)?) {
                out.frames[i].latent = Some(z);
            }
        }
        Ok(out)
    }

    /// Fits the prior of level `w` to the scaled latents of the frozen
    /// transform, then builds its table.
    pub fn train_level(&mut self, w: usize, train_set: &PreparedSet, val_set: &PreparedSet, cfg: &TrainConfig) -> Result<TrainReport> {
        let level = self.level(w)?.clone();
        let tr = self.with_latents(train_set, cfg.batch_size)?;
        let va = self.with_latents(val_set, cfg.batch_size)?;
        let mut obj = ScaledRate {
            a: level.a,
            prior: level.prior,
        };
        info!("fitting the prior for rate scale {}", level.a);
        let report = train(&mut obj, &tr, &va, cfg)?;
        let symbols: Vec<i64> = tr
            .frames
            .iter()
            .flat_map(|f| scaled_symbols(f.latent.as_deref().unwrap_or_default(), obj.a))
            .collect();
        let table = EntropyTable::build(&obj.prior, &symbols)?;
        let lv = &mut self.levels[w];
        lv.prior = obj.prior;
        lv.table = Some(table);
        Ok(report)
    }
}

/// Rate of `a·z` under a prior, for frozen cached latents.
pub(crate) struct ScaledRate {
    pub a: f64,
    pub prior: FactorizedPrior,
}

impl Objective for ScaledRate {
    fn read_params(&self) -> Vec<f64> {
        self.prior.params.data.clone()
    }

    fn write_params(&mut self, theta: &[f64]) {
        self.prior.params.data.copy_from_slice(theta);
    }

    fn evaluate(&self, set: &PreparedSet, idx: &[usize], noise: Option<u64>, grad: Option<&mut [f64]>, scale: f64) -> Result<StepStats> {
        let mut z = Vec::new();
        for &i in idx {
            let lat = set.frames[i]
                .latent
                .as_ref()
                .ok_or_else(|| Error::Model("prior fitting needs cached latents".into()))?;
            match noise {
                Some(seed) => {
                    let mut r = rng::stream(seed, rng::purpose::NOISE, i as u64);
                    z.extend(lat.iter().map(|v| self.a * v + r.gen_range(-0.5..0.5)));
                }
                None => z.extend(scaled_symbols(lat, self.a).into_iter().map(|v| v as f64)),
            }
        }
        let rate = match grad {
            Some(g) => {
                let mut dphi = vec![0.0; g.len()];
                let rate = rate_estimate(&z, &self.prior, None, Some(&mut dphi));
                g.iter_mut().zip(&dphi).for_each(|(a, b)| *a += scale * b);
                rate
            }
            None => rate_estimate(&z, &self.prior, None, None),
        };
        Ok(StepStats {
            frames: idx.len(),
            loss: rate,
            rate,
            ..StepStats::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advanced::RATE_SCALES;
    use crate::latent::tests::small_set;
    use crate::latent::AutoencoderShape;
    use crate::nn::gradcheck::{max_rel_error, probes};
    use crate::signal::Scenario;
    use proptest::prelude::*;

    fn base(set: &PreparedSet) -> NeuralModel {
        let mut m = NeuralModel::new(AutoencoderShape::new(2, 2, 3, 1).with_latent_map(12.0, 0.0), 100.0, false, 3);
        m.build_table(set, 4).unwrap();
        m
    }

    #[test]
    fn hand_example() {
        let s = scaled_symbols(&[3.3], 0.5);
        assert_eq!(s, vec![2]);
        let rec = 2.0 * s[0] as f64;
        assert_eq!(rec, 4.0);
        assert!((rec - 3.3f64).abs() <= 1.0);
    }

    #[test]
    fn grid_has_exact_reciprocals() {
        for a in RATE_SCALES {
            assert_eq!((1.0 / a) * a, 1.0, "{a}");
        }
        let set = small_set(Scenario::Downlink, 1);
        assert!(VariableRateSet::new(base(&set), &[0.5, 0.25, 1.0], 0).is_err());
        assert!(VariableRateSet::new(base(&set), &[0.5, 0.9], 0).is_err());
    }

    proptest! {
        #[test]
        fn rescaled_latent_error_is_bounded(z in -300.0f64..300.0, w in 0usize..5) {
            let a = RATE_SCALES[w];
            let b = 1.0 / a;
            let rec = b * scaled_symbols(&[z], a)[0] as f64;
            prop_assert!((rec - z).abs() <= b / 2.0 + 1e-12 * z.abs().max(1.0));
        }
    }

    #[test]
    fn unit_scale_is_the_base_model() {
        let set = small_set(Scenario::Downlink, 3);
        let m = base(&set);
        let vr = VariableRateSet::new(m.clone(), &RATE_SCALES, 1).unwrap();
        let idx = [0, 1, 2];
        let w = RATE_SCALES.len() - 1;
        let sym = vr.encode_symbols(&set, &idx, w).unwrap();
        assert_eq!(sym, m.encode_symbols(&set, &idx).unwrap());
        assert_eq!(vr.decode_symbols(&sym, w).unwrap(), m.decode_symbols(&sym, None).unwrap());
        for f in &sym {
            assert_eq!(vr.table(w).unwrap().encode(f), m.table().unwrap().encode(f));
        }
    }

    #[test]
    fn prior_gradient_and_frozen_transform() {
        let set = small_set(Scenario::Uplink, 3);
        let vr = VariableRateSet::new(base(&set), &RATE_SCALES, 1).unwrap();
        let cached = vr.with_latents(&set, 2).unwrap();
        let mut obj = ScaledRate {
            a: 0.25,
            prior: vr.levels[1].prior.clone(),
        };
        let idx = [0, 2];
        let mut g = vec![0.0; obj.read_params().len()];
        obj.evaluate(&cached, &idx, Some(4), Some(&mut g), 1.0).unwrap();
        let mut theta = obj.read_params();
        let pr = probes(theta.len(), 60, 1);
        let err = max_rel_error(&mut theta, &g, &pr, 1e-4, |v| {
            obj.write_params(v);
            obj.evaluate(&cached, &idx, Some(4), None, 1.0).unwrap().loss
        });
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn prior_training_lowers_rate_and_shrinks_support() {
        let set = small_set(Scenario::Downlink, 6);
        let mut vr = VariableRateSet::new(base(&set), &RATE_SCALES, 1).unwrap();
        let digest = vr.base.ae.params.digest();
        let cfg = TrainConfig {
            epochs: 8,
            batch_size: 3,
            lr: 5e-2,
            seed: 2,
            ..TrainConfig::default()
        };
        let rep = vr.train_level(0, &set, &set, &cfg).unwrap();
        assert_eq!(vr.base.ae.params.digest(), digest);
        assert!(rep.history.last().unwrap().val_rate < rep.history[0].val_rate);
        let narrow = vr.table(0).unwrap().channels[0].width();
        let wide = vr.table(4).unwrap().channels[0].width();
        assert!(narrow < wide, "{narrow} vs {wide}");
    }
}
