//! Successive refinement: layer 1 codes the frame, every later layer codes
//! the frame stacked with the reconstruction so far and emits a residual.

use log::info;

use crate::entropy::{round_latent, NeuralModel};
use crate::error::{Error, Result};
use crate::latent::{AutoencoderShape, PreparedSet};
use crate::train::{train, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementStack {
    pub layers: Vec<NeuralModel>,
}

impl RefinementStack {
    /// Starts a stack from a trained single-layer model.
    pub fn new(base: NeuralModel) -> Result<Self> {
        if base.residual {
            return Err(Error::Model("the base layer cannot be residual".into()));
        }
        base.table()?;
        Ok(Self { layers: vec![base] })
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn digests(&self) -> Vec<String> {
        self.layers.iter().map(NeuralModel::digest).collect()
    }

    /// Symbols and decoder-side reconstructions of layers `1..=upto`.
    /// Each layer's input uses the reconstruction the decoder will have.
    pub fn encode(&self, set: &PreparedSet, idx: &[usize], upto: usize) -> Result<(Vec<Vec<Vec<i64>>>, Vec<Vec<Vec<f64>>>)> {
        if upto == 0 || upto > self.len() {
            return Err(Error::Model(format!("layer {upto} requested from a {}-layer stack", self.len())));
        }
        let mut symbols = Vec::with_capacity(upto);
        let mut recs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(upto);
        for layer in &self.layers[..upto] {
            let prev = recs.last().map(Vec::as_slice);
            let sym: Vec<Vec<i64>> = layer
                .latents_given(set, idx, prev)?
                .iter()
                .map(|z| round_latent(z))
                .collect();
            let rec = layer.decode_symbols(&sym, prev)?;
            symbols.push(sym);
            recs.push(rec);
        }
        Ok((symbols, recs))
    }

    /// Reconstruction from the symbols of a contiguous layer prefix
    /// (`[layer][frame]`).
    pub fn decode(&self, symbols: &[Vec<Vec<i64>>]) -> Result<Vec<Vec<f64>>> {
        if symbols.is_empty() || symbols.len() > self.len() {
            return Err(Error::Model(format!("{} layers of symbols for a {}-layer stack", symbols.len(), self.len())));
        }
        let mut rec: Option<Vec<Vec<f64>>> = None;
        for (layer, sym) in self.layers.iter().zip(symbols) {
            rec = Some(layer.decode_symbols(sym, rec.as_deref())?);
        }
        Ok(rec.unwrap_or_default())
    }

    /// Reconstruction of every frame of `set` through all current layers.
    pub fn reconstruct(&self, set: &PreparedSet, batch: usize) -> Result<Vec<Vec<f64>>> {
        let idx: Vec<usize> = (0..set.len()).collect();
        let mut out = Vec::with_capacity(set.len());
        for c in idx.chunks(batch.max(1)) {
            let (_, mut recs) = self.encode(set, c, self.len())?;
            out.extend(recs.pop().unwrap_or_default());
        }
        Ok(out)
    }

    /// Trains and appends one residual layer on frozen lower layers.
    pub fn train_layer(
        &mut self,
        shape: AutoencoderShape,
        lambda: f64,
        train_set: &PreparedSet,
        val_set: &PreparedSet,
        cfg: &TrainConfig,
    ) -> Result<TrainReport> {
        if shape.input != 4 {
            return Err(Error::Config("refinement encoders take four input rows".into()));
        }
        let before = self.digests();
        let mut tr = train_set.clone();
        tr.set_prev(self.reconstruct(train_set, cfg.batch_size)?);
        let mut va = val_set.clone();
        va.set_prev(self.reconstruct(val_set, cfg.batch_size)?);
        let mut layer = NeuralModel::new(shape, lambda, true, cfg.seed);
        info!("training refinement layer {} at lambda {lambda}", self.len() + 1);
        let report = train(&mut layer, &tr, &va, cfg)?;
        layer.build_table(&tr, cfg.batch_size)?;
        if self.digests() != before {
            return Err(Error::Model("a frozen layer changed while training the next one".into()));
        }
        self.layers.push(layer);
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::tests::small_set;
    use crate::latent::{accumulate, reconstruction_loss};
    use crate::signal::Scenario;

    fn base(set: &PreparedSet) -> NeuralModel {
        let mut m = NeuralModel::new(AutoencoderShape::new(2, 2, 3, 1).with_latent_map(8.0, 0.0), 100.0, false, 3);
        m.build_table(set, 4).unwrap();
        m
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 2,
            lr: 1e-2,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_layer_matches_plain_model() {
        let set = small_set(Scenario::Downlink, 3);
        let m = base(&set);
        let stack = RefinementStack::new(m.clone()).unwrap();
        let idx = [0, 1, 2];
        let (sym, recs) = stack.encode(&set, &idx, 1).unwrap();
        assert_eq!(sym[0], m.encode_symbols(&set, &idx).unwrap());
        assert_eq!(recs[0], m.decode_symbols(&sym[0], None).unwrap());
        assert_eq!(stack.decode(&sym).unwrap(), recs[0]);
    }

    #[test]
    fn higher_layers_leave_lower_ones_untouched() {
        let set = small_set(Scenario::Uplink, 4);
        let mut stack = RefinementStack::new(base(&set)).unwrap();
        let idx = [0, 1, 2, 3];
        let (sym1, _) = stack.encode(&set, &idx, 1).unwrap();
        let d1 = stack.digests();
        stack.train_layer(AutoencoderShape::new(4, 2, 3, 1).with_latent_map(8.0, 0.0), 1e3, &set, &set, &quick()).unwrap();
        assert_eq!(stack.digests()[0], d1[0]);
        let (sym, recs) = stack.encode(&set, &idx, 2).unwrap();
        assert_eq!(sym[0], sym1[0]);
        // Decoder-side previous layer equals the encoder's.
        assert_eq!(stack.decode(&sym[..1]).unwrap(), recs[0]);
        assert_eq!(stack.decode(&sym).unwrap(), recs[1]);
        assert!(stack.decode(&[sym[0].clone(), sym[1].clone(), sym[1].clone()]).is_err());
    }

    #[test]
    fn zero_residual_decoder_repeats_base() {
        let set = small_set(Scenario::Downlink, 2);
        let mut stack = RefinementStack::new(base(&set)).unwrap();
        let mut layer = NeuralModel::new(AutoencoderShape::new(4, 2, 3, 1), 1e3, true, 9);
        let enc = layer.ae.encoder_len;
        layer.ae.params.data[enc..].iter_mut().for_each(|v| *v = 0.0);
        stack.layers.push(layer);
        let (_, recs) = stack.encode(&set, &[0, 1], 2).unwrap();
        assert_eq!(recs[0], recs[1]);
    }

    #[test]
    fn refinement_training_reduces_layer_loss() {
        let set = small_set(Scenario::Downlink, 6);
        let mut stack = RefinementStack::new(base(&set)).unwrap();
        let cfg = TrainConfig { epochs: 6, ..quick() };
        let rep = stack.train_layer(AutoencoderShape::new(4, 2, 4, 1).with_latent_map(8.0, 0.0), 1e3, &set, &set, &cfg).unwrap();
        let first = rep.history.first().unwrap().val_loss;
        let last = rep.history.last().unwrap().val_loss;
        assert!(last < 0.8 * first, "{first} -> {last}");
        let idx: Vec<usize> = (0..6).collect();
        let (_, recs) = stack.encode(&set, &idx, 2).unwrap();
        let evm = |r: &[Vec<f64>]| accumulate(&reconstruction_loss(&set, &idx, r, None).0).finish().unwrap().percent;
        assert!(evm(&recs[1]) < evm(&recs[0]));
    }
}
