//! Learned transforms around the decimated, block-scaled frame and the two
//! fixed-rate latent quantizers (uniform with a straight-through gradient,
//! and a learned codebook).

pub mod model;
pub mod quantize;
pub mod recon;

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classical::interleave;
use crate::error::{Error, Result};
use crate::multirate::{decimate, ResamplerSpec};
use crate::nn::{ParamSet, Seq, Transform, TransformCache};
use crate::scaling::{compute_and_apply_scaling, ScalingConfig};
use crate::signal::{EvmAccumulator, FrameSpec};

pub use model::{LatentUniformModel, LatentVqModel};
pub use quantize::{uniform_latent_quantize, LatentVqCodebook};
pub use recon::ReconOp;

/// Latent channels per time step.
pub const LATENT_DIM: usize = 2;

/// One frame ready for the learned codecs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedFrame {
    /// Scaled decimated samples, real-interleaved (`2·N′`).
    pub s: Vec<f64>,
    pub t: Vec<u32>,
    /// Original occupied spectrum, real-interleaved (`2·n_occ`).
    pub target: Vec<f64>,
    pub energy: f64,
    /// Lower-layer reconstruction in the scaled domain, for refinement.
    pub prev: Option<Vec<f64>>,
    /// Cached latents of a frozen encoder.
    pub latent: Option<Vec<f64>>,
}

/// A frame set transformed once into what every learned scheme consumes.
#[derive(Debug, Clone)]
pub struct PreparedSet {
    pub frames: Vec<PreparedFrame>,
    pub frame: FrameSpec,
    pub resampler: ResamplerSpec,
    pub scaling: ScalingConfig,
    pub op: Arc<ReconOp>,
}

impl PreparedSet {
    pub fn prepare(frames: &[Vec<Complex64>], frame: &FrameSpec, rs: &ResamplerSpec, scaling: &ScalingConfig) -> Result<Self> {
        let op = Arc::new(ReconOp::new(frame, rs)?);
        Self::prepare_with(frames, frame, rs, scaling, op)
    }

    pub fn prepare_with(
        frames: &[Vec<Complex64>],
        frame: &FrameSpec,
        rs: &ResamplerSpec,
        scaling: &ScalingConfig,
        op: Arc<ReconOp>,
    ) -> Result<Self> {
        let prepared = frames
            .iter()
            .map(|x| prepare_frame(x, frame, rs, scaling))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            frames: prepared,
            frame: frame.clone(),
            resampler: rs.clone(),
            scaling: scaling.clone(),
            op,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_prime(&self) -> usize {
        self.op.n_prime
    }

    /// Scaling factor of every time step of frame `i`.
    pub fn gains(&self, i: usize) -> Vec<f64> {
        let n_s = self.scaling.n_s;
        (0..self.n_prime()).map(|j| self.frames[i].t[j / n_s] as f64).collect()
    }

    /// Encoder input for a batch: `[S]` or `[S; Ŝ_prev]` per time step.
    pub fn input_seq(&self, idx: &[usize], with_prev: bool) -> Result<Seq> {
        if !with_prev {
            return self.input_seq_with(idx, None);
        }
        let prev = idx
            .iter()
            .map(|&i| {
                self.frames[i]
                    .prev
                    .as_deref()
                    .ok_or_else(|| Error::Model("refinement input needs the previous layer".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        self.input_seq_with(idx, Some(&prev))
    }

    /// As [`input_seq`](Self::input_seq) with explicit previous-layer rows
    /// (one per entry of `idx`).
    pub fn input_seq_with(&self, idx: &[usize], prev: Option<&[&[f64]]>) -> Result<Seq> {
        let n = self.n_prime();
        let f = if prev.is_some() { 4 } else { 2 };
        let mut x = Seq::zeros(n, idx.len(), f);
        for (b, &i) in idx.iter().enumerate() {
            let fr = &self.frames[i];
            let prev = prev.map(|p| p[b]);
            if prev.is_some_and(|p| p.len() != 2 * n) {
                return Err(Error::InputShape("previous-layer reconstruction has the wrong length".into()));
            }
            for t in 0..n {
                let row = x.at_mut(t, b);
                row[0] = fr.s[2 * t];
                row[1] = fr.s[2 * t + 1];
                if let Some(p) = prev {
                    row[2] = p[2 * t];
                    row[3] = p[2 * t + 1];
                }
            }
        }
        Ok(x)
    }

    /// Sets the previous-layer reconstruction of every frame.
    pub fn set_prev(&mut self, prev: Vec<Vec<f64>>) {
        for (f, p) in self.frames.iter_mut().zip(prev) {
            f.prev = Some(p);
        }
    }
}

fn prepare_frame(x: &[Complex64], frame: &FrameSpec, rs: &ResamplerSpec, scaling: &ScalingConfig) -> Result<PreparedFrame> {
    if x.len() != frame.frame_len() {
        return Err(Error::InputShape(format!("frame has {} samples, expected {}", x.len(), frame.frame_len())));
    }
    let scaled = compute_and_apply_scaling(&decimate(x, rs)?, scaling)?;
    let target = interleave(&frame.occupied_spectrum(x)?);
    let energy: f64 = target.iter().map(|v| v * v).sum();
    if energy <= 0.0 {
        return Err(Error::UndefinedMetric("frame has no energy on the occupied set".into()));
    }
    Ok(PreparedFrame {
        s: interleave(&scaled.s),
        t: scaled.t,
        target,
        energy,
        prev: None,
        latent: None,
    })
}

/// Per-frame squared error and reference energy on the occupied set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameError {
    pub error: f64,
    pub reference: f64,
}

impl FrameError {
    pub fn normalized(&self) -> f64 {
        self.error / self.reference
    }
}

/// Scaled-domain reconstruction `Ŝ` per frame: decoder output plus the
/// previous layer (if any), real-interleaved.
pub fn assemble(set: &PreparedSet, idx: &[usize], y: &Seq, residual: bool) -> Vec<Vec<f64>> {
    let n = set.n_prime();
    idx.iter()
        .enumerate()
        .map(|(b, &i)| {
            let mut s = vec![0.0; 2 * n];
            for t in 0..n {
                let row = y.at(t, b);
                s[2 * t] = row[0];
                s[2 * t + 1] = row[1];
            }
            if residual {
                if let Some(p) = &set.frames[i].prev {
                    for (a, b) in s.iter_mut().zip(p) {
                        *a += b;
                    }
                }
            }
            s
        })
        .collect()
}

/// Normalized occupied-band error of the scaled-domain reconstructions
/// `s_hat` (one per batch entry). With `grad_scale = Some(c)` also returns
/// `c·∂(mean_b D_b)/∂Ŝ` laid out as a decoder-output sequence.
pub fn reconstruction_loss(
    set: &PreparedSet,
    idx: &[usize],
    s_hat: &[Vec<f64>],
    grad_scale: Option<f64>,
) -> (Vec<FrameError>, Option<Seq>) {
    let n = set.n_prime();
    let bsz = idx.len();
    let m = 2 * set.op.n_occ;
    let mut rescaled = Vec::with_capacity(bsz * 2 * n);
    let gains: Vec<Vec<f64>> = idx.iter().map(|&i| set.gains(i)).collect();
    for (b, s) in s_hat.iter().enumerate() {
        for t in 0..n {
            rescaled.push(s[2 * t] * gains[b][t]);
            rescaled.push(s[2 * t + 1] * gains[b][t]);
        }
    }
    let x_hat = set.op.apply(&rescaled, bsz);
    let mut errs = Vec::with_capacity(bsz);
    let mut dx = grad_scale.map(|_| vec![0.0; bsz * m]);
    for (b, &i) in idx.iter().enumerate() {
        let fr = &set.frames[i];
        let row = &x_hat[b * m..(b + 1) * m];
        let mut e = 0.0;
        for (a, x) in row.iter().zip(&fr.target) {
            e += (a - x) * (a - x);
        }
        errs.push(FrameError {
            error: e,
            reference: fr.energy,
        });
        if let (Some(c), Some(dx)) = (grad_scale, dx.as_mut()) {
            let k = 2.0 * c / (fr.energy * bsz as f64);
            for ((d, a), x) in dx[b * m..(b + 1) * m].iter_mut().zip(row).zip(&fr.target) {
                *d = k * (a - x);
            }
        }
    }
    let grad = dx.map(|dx| {
        let ds = set.op.adjoint(&dx, bsz);
        let mut dy = Seq::zeros(n, bsz, 2);
        for b in 0..bsz {
            for t in 0..n {
                let row = dy.at_mut(t, b);
                row[0] = ds[b * 2 * n + 2 * t] * gains[b][t];
                row[1] = ds[b * 2 * n + 2 * t + 1] * gains[b][t];
            }
        }
        dy
    });
    (errs, grad)
}

/// Dataset-level EVM accumulator over frame errors.
pub fn accumulate(errs: &[FrameError]) -> EvmAccumulator {
    let mut acc = EvmAccumulator::default();
    for e in errs {
        acc.add_energies(e.error, e.reference);
    }
    acc
}

/// Dimensions that rebuild an autoencoder's parameter layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderShape {
    pub input: usize,
    pub latent: usize,
    pub output: usize,
    pub hidden: usize,
    pub depth: usize,
    /// Fixed affine map at the latent interface: the encoder emits
    /// `scale·head + offset` and the decoder reads `(ẑ − offset)/scale`.
    #[serde(default = "unit")]
    pub latent_scale: f64,
    #[serde(default)]
    pub latent_offset: f64,
    /// Squash the head with `tanh` before the affine map, so latents stay
    /// inside `offset ± scale`.
    #[serde(default)]
    pub bounded: bool,
}

fn unit() -> f64 {
    1.0
}

impl AutoencoderShape {
    pub fn new(input: usize, latent: usize, hidden: usize, depth: usize) -> Self {
        Self {
            input,
            latent,
            output: 2,
            hidden,
            depth,
            latent_scale: 1.0,
            latent_offset: 0.0,
            bounded: false,
        }
    }

    pub fn with_latent_map(mut self, scale: f64, offset: f64) -> Self {
        self.latent_scale = scale;
        self.latent_offset = offset;
        self
    }

    pub fn bounded(mut self) -> Self {
        self.bounded = true;
        self
    }
}

/// Encoder `f_s` and decoder `g_d` sharing one parameter buffer (encoder
/// arrays first).
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub shape: AutoencoderShape,
    pub params: ParamSet,
    pub encoder: Transform,
    pub decoder: Transform,
    /// Length of the encoder prefix of `params`.
    pub encoder_len: usize,
}

impl Autoencoder {
    /// Layout with zero parameters.
    pub fn zeroed(shape: AutoencoderShape) -> Self {
        let mut params = ParamSet::new();
        let encoder = Transform::register(&mut params, "enc", shape.input, shape.hidden, shape.depth, shape.latent);
        let encoder_len = params.len();
        let decoder = Transform::register(&mut params, "dec", shape.latent, shape.hidden, shape.depth, shape.output);
        Self {
            shape,
            params,
            encoder,
            decoder,
            encoder_len,
        }
    }

    pub fn new<R: Rng>(shape: AutoencoderShape, rng: &mut R) -> Self {
        let mut ae = Self::zeroed(shape);
        ae.encoder.init(&mut ae.params, rng);
        ae.decoder.init(&mut ae.params, rng);
        ae
    }

    /// Rebuilds from stored parameters, checking the layout matches.
    pub fn from_params(shape: AutoencoderShape, params: ParamSet) -> Result<Self> {
        let mut ae = Self::zeroed(shape);
        if ae.params.specs != params.specs {
            return Err(Error::Format("autoencoder parameter layout does not match its shape".into()));
        }
        ae.params = params;
        Ok(ae)
    }

    pub fn encode(&self, x: &Seq) -> Result<(Seq, TransformCache)> {
        if x.features != self.shape.input {
            return Err(Error::InputShape(format!("encoder expects {} features, got {}", self.shape.input, x.features)));
        }
        let (mut z, cache) = self.encoder.forward(&self.params.data, x)?;
        let (a, c) = (self.shape.latent_scale, self.shape.latent_offset);
        if self.shape.bounded {
            z.data.iter_mut().for_each(|v| *v = a * v.tanh() + c);
        } else if a != 1.0 || c != 0.0 {
            z.data.iter_mut().for_each(|v| *v = a * *v + c);
        }
        Ok((z, cache))
    }

    pub fn decode(&self, z: &Seq) -> Result<(Seq, TransformCache)> {
        if z.features != self.shape.latent {
            return Err(Error::InputShape(format!("decoder expects {} features, got {}", self.shape.latent, z.features)));
        }
        let u = self.decoder_input(z);
        self.decoder.forward(&self.params.data, &u)
    }

    fn decoder_input(&self, z: &Seq) -> Seq {
        let (a, c) = (self.shape.latent_scale, self.shape.latent_offset);
        let mut u = z.clone();
        if a != 1.0 || c != 0.0 {
            u.data.iter_mut().for_each(|v| *v = (*v - c) / a);
        }
        u
    }

    pub fn encode_backward(&self, g: &mut [f64], x: &Seq, cache: &TransformCache, dz: &Seq) {
        let a = self.shape.latent_scale;
        if self.shape.bounded {
            let h = self.encoder.output_of(&self.params.data, cache);
            let mut dy = dz.clone();
            dy.data.iter_mut().zip(&h.data).for_each(|(d, h)| {
                let t = h.tanh();
                *d *= a * (1.0 - t * t);
            });
            self.encoder.backward(&self.params.data, g, x, cache, &dy);
        } else if a == 1.0 {
            self.encoder.backward(&self.params.data, g, x, cache, dz);
        } else {
            let mut dy = dz.clone();
            dy.data.iter_mut().for_each(|v| *v *= a);
            self.encoder.backward(&self.params.data, g, x, cache, &dy);
        }
    }

    /// Returns the gradient with respect to the decoder's latent input `ẑ`.
    pub fn decode_backward(&self, g: &mut [f64], z: &Seq, cache: &TransformCache, dy: &Seq) -> Seq {
        let u = self.decoder_input(z);
        let mut du = self.decoder.backward(&self.params.data, g, &u, cache, dy);
        let a = self.shape.latent_scale;
        if a != 1.0 {
            du.data.iter_mut().for_each(|v| *v /= a);
        }
        du
    }
}

/// Flattens a latent sequence into per-frame vectors, time-major within a
/// frame (element `t·V + v`).
pub fn latents_per_frame(z: &Seq) -> Vec<Vec<f64>> {
    (0..z.batch)
        .map(|b| (0..z.steps).flat_map(|t| z.at(t, b).iter().copied()).collect())
        .collect()
}

/// Inverse of [`latents_per_frame`].
pub fn latents_to_seq(frames: &[Vec<f64>], dim: usize) -> Seq {
    let steps = frames.first().map_or(0, |f| f.len() / dim);
    let mut z = Seq::zeros(steps, frames.len(), dim);
    for (b, f) in frames.iter().enumerate() {
        for t in 0..steps {
            z.at_mut(t, b).copy_from_slice(&f[t * dim..(t + 1) * dim]);
        }
    }
    z
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::nn::gradcheck::{max_rel_error, probes};
    use crate::signal::{generate_frame, Scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_set(scenario: Scenario, frames: usize) -> PreparedSet {
        let spec = FrameSpec::new(scenario, 64, 24, if scenario == Scenario::Uplink { 8 } else { 0 }, 16).unwrap();
        let rs = ResamplerSpec::new(5, 8, 121, 8.0).unwrap();
        let n_prime = rs.decimated_len(spec.frame_len()).unwrap();
        let sc = ScalingConfig::new(n_prime, 8).unwrap();
        let xs: Vec<Vec<Complex64>> = (0..frames as u64)
            .map(|i| generate_frame(&spec, None, 7, i).unwrap().samples)
            .collect();
        PreparedSet::prepare(&xs, &spec, &rs, &sc).unwrap()
    }

    #[test]
    fn latent_count_matches_frame() {
        let set = small_set(Scenario::Downlink, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ae = Autoencoder::new(AutoencoderShape::new(2, 2, 4, 2), &mut rng);
        let (z, _) = ae.encode(&set.input_seq(&[0, 1], false).unwrap()).unwrap();
        let flat = latents_per_frame(&z);
        assert_eq!(flat[0].len(), 2 * set.n_prime());
        assert_eq!(latents_to_seq(&flat, 2), z);
    }

    #[test]
    fn default_numerology_latent_size() {
        let rs = ResamplerSpec::default();
        assert_eq!(rs.decimated_len(FrameSpec::downlink_default().frame_len()).unwrap() * LATENT_DIM, 640);
    }

    #[test]
    fn zero_parameters_give_zero_latent() {
        let set = small_set(Scenario::Downlink, 1);
        let ae = Autoencoder::zeroed(AutoencoderShape::new(2, 2, 4, 2));
        let (z, _) = ae.encode(&set.input_seq(&[0], false).unwrap()).unwrap();
        assert!(z.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn transform_is_not_pointwise() {
        let set = small_set(Scenario::Downlink, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ae = Autoencoder::new(AutoencoderShape::new(2, 2, 4, 2), &mut rng);
        let x = set.input_seq(&[0], false).unwrap();
        let (z, _) = ae.encode(&x).unwrap();
        let mut xp = x.clone();
        let n = x.steps;
        for t in 0..n {
            xp.at_mut(t, 0).copy_from_slice(x.at(n - 1 - t, 0));
        }
        let (zp, _) = ae.encode(&xp).unwrap();
        let differs = (0..n).any(|t| (0..2).any(|v| (zp.at(n - 1 - t, 0)[v] - z.at(t, 0)[v]).abs() > 1e-9));
        assert!(differs);
    }

    #[test]
    fn perfect_and_empty_reconstruction() {
        for scenario in [Scenario::Downlink, Scenario::Uplink] {
            let set = small_set(scenario, 3);
            let idx = [0, 1, 2];
            let exact: Vec<Vec<f64>> = idx.iter().map(|&i| set.frames[i].s.clone()).collect();
            let (errs, _) = reconstruction_loss(&set, &idx, &exact, None);
            // Only the filter floor remains.
            assert!(errs.iter().all(|e| e.normalized() < 1e-2), "{errs:?}");
            let zero = vec![vec![0.0; 2 * set.n_prime()]; 3];
            let (errs, _) = reconstruction_loss(&set, &idx, &zero, None);
            assert!(errs.iter().all(|e| (e.normalized() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn loss_equals_squared_evm() {
        let set = small_set(Scenario::Downlink, 2);
        let s: Vec<Vec<f64>> = set.frames.iter().map(|f| f.s.iter().map(|v| 0.9 * v).collect()).collect();
        let (errs, _) = reconstruction_loss(&set, &[0, 1], &s, None);
        for e in &errs {
            let mut acc = EvmAccumulator::default();
            acc.add_energies(e.error, e.reference);
            let pct = acc.finish().unwrap().percent;
            assert!((e.normalized() - (pct / 100.0).powi(2)).abs() < 1e-15);
        }
    }

    #[test]
    fn reconstruction_gradient() {
        let set = small_set(Scenario::Uplink, 2);
        let idx = [1, 0];
        let n = set.n_prime();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut flat: Vec<f64> = (0..2 * 2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let split = |v: &[f64]| vec![v[..2 * n].to_vec(), v[2 * n..].to_vec()];
        let mean = |errs: &[FrameError]| errs.iter().map(|e| e.normalized()).sum::<f64>() / errs.len() as f64;
        let (_, dy) = reconstruction_loss(&set, &idx, &split(&flat), Some(1.0));
        let dy = dy.unwrap();
        let mut analytic = vec![0.0; flat.len()];
        for b in 0..2 {
            for t in 0..n {
                analytic[b * 2 * n + 2 * t] = dy.at(t, b)[0];
                analytic[b * 2 * n + 2 * t + 1] = dy.at(t, b)[1];
            }
        }
        let pr = probes(flat.len(), 40, 5);
        let err = max_rel_error(&mut flat, &analytic, &pr, 1e-5, |v| mean(&reconstruction_loss(&set, &idx, &split(v), None).0));
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn bounded_encoder_stays_in_range_and_differentiates() {
        let set = small_set(Scenario::Downlink, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut ae = Autoencoder::new(AutoencoderShape::new(2, 2, 3, 1).with_latent_map(0.5, 0.5).bounded(), &mut rng);
        ae.params.data.iter_mut().for_each(|v| *v *= 6.0);
        let x = set.input_seq(&[0, 1], false).unwrap();
        let (z, cache) = ae.encode(&x).unwrap();
        assert!(z.data.iter().all(|v| (0.0..=1.0).contains(v)));
        let w: Vec<f64> = (0..z.data.len()).map(|i| ((i % 5) as f64 - 2.0) * 0.3).collect();
        let dz = Seq::from_vec(z.steps, z.batch, z.features, w.clone());
        let mut g = vec![0.0; ae.params.len()];
        ae.encode_backward(&mut g, &x, &cache, &dz);
        let mut theta = ae.params.data.clone();
        let pr = probes(ae.encoder_len, 40, 2);
        let err = max_rel_error(&mut theta, &g, &pr, 1e-5, |p| {
            ae.params.data.copy_from_slice(p);
            ae.encode(&x).unwrap().0.data.iter().zip(&w).map(|(a, b)| a * b).sum()
        });
        assert!(err < 1e-5, "{err}");
    }
}
