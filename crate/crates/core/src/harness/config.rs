//! Run configuration: one TOML file with every module's settings. Unknown
//! keys are rejected; every field has a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::advanced::{RATE_SCALES, REFINEMENT_LAMBDAS};
use crate::codec::Pipeline;
use crate::entropy::LAMBDA_GRID;
use crate::error::{Error, Result};
use crate::latent::model::VqSchedule;
use crate::latent::AutoencoderShape;
use crate::multirate::ResamplerSpec;
use crate::scaling::ScalingConfig;
use crate::signal::{ChannelSpec, FrameSpec, Scenario};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameConfig {
    pub scenario: Scenario,
    pub n_fft: usize,
    pub n_sym: usize,
    pub n_cp: usize,
    pub mod_order: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Downlink,
            n_fft: 512,
            n_sym: 280,
            n_cp: 64,
            mod_order: 64,
        }
    }
}

impl FrameConfig {
    pub fn spec(&self) -> Result<FrameSpec> {
        FrameSpec::new(self.scenario, self.n_fft, self.n_sym, self.n_cp, self.mod_order)
    }
}

/// Uplink multipath channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub n_taps: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_taps: 7,
            snr_db: 5.0,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn spec(&self) -> ChannelSpec {
        ChannelSpec::new(self.n_taps, self.snr_db, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    /// Block length; `None` means one block per frame (`N_s = N′`).
    pub n_s: Option<usize>,
    pub q_s: u32,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self { n_s: None, q_s: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub dir: PathBuf,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            seed: 1,
            train: 20_000,
            val: 2_000,
            test: 2_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    ClassicalScalar,
    ClassicalVector,
    ClassicalVectorFixed,
    LatentUniform,
    LatentVq,
    Neural,
    Refinement,
    VariableRate,
}

impl SchemeKind {
    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::ClassicalScalar => "classical-scalar",
            SchemeKind::ClassicalVector => "classical-vector",
            SchemeKind::ClassicalVectorFixed => "classical-vector-fixed",
            SchemeKind::LatentUniform => "latent-uniform",
            SchemeKind::LatentVq => "latent-vq",
            SchemeKind::Neural => "neural",
            SchemeKind::Refinement => "refinement",
            SchemeKind::VariableRate => "variable-rate",
        }
    }

    /// Whether the rate parameter is λ rather than Q.
    pub fn rate_is_lambda(self) -> bool {
        matches!(self, SchemeKind::Neural | SchemeKind::Refinement | SchemeKind::VariableRate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    /// Bits per real element (classical and fixed-rate latent schemes).
    pub q_bits: u32,
    /// Vector-quantizer block length.
    pub block_dim: usize,
    pub lambda: f64,
    pub hidden: usize,
    pub depth: usize,
    pub latent: usize,
    /// Affine map applied to the encoder head; `None` picks the scheme
    /// default.
    pub latent_scale: Option<f64>,
    pub latent_offset: Option<f64>,
    pub beta: f64,
    pub vq: VqSchedule,
    pub lloyd_iters: usize,
    pub refinement_lambdas: Vec<f64>,
    pub rate_scales: Vec<f64>,
    /// Epochs of unquantized autoencoder training shared by the
    /// fixed-rate latent schemes.
    pub warm_epochs: usize,
    /// Learning-rate multiplier for quantized fine-tuning after the
    /// warm-up.
    pub fine_tune_lr_factor: f64,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            kind: SchemeKind::Neural,
            q_bits: 4,
            block_dim: 2,
            lambda: 500.0,
            hidden: 32,
            depth: 2,
            latent: 2,
            latent_scale: None,
            latent_offset: None,
            beta: 1.0,
            vq: VqSchedule::default(),
            lloyd_iters: 100,
            refinement_lambdas: REFINEMENT_LAMBDAS.to_vec(),
            rate_scales: RATE_SCALES.to_vec(),
            warm_epochs: 10,
            fine_tune_lr_factor: 0.1,
        }
    }
}

/// Latent map defaults: integer-rounded latents want a wide range, the
/// clipped uniform quantizer wants `[0, 1]`. The fixed-rate latent schemes
/// also squash the head so that latents never reach the clip, where the
/// straight-through gradient would push them further out.
pub const NEURAL_LATENT_SCALE: f64 = 16.0;
pub const UNIFORM_LATENT_SCALE: f64 = 0.5;
pub const UNIFORM_LATENT_OFFSET: f64 = 0.5;

impl SchemeConfig {
    pub fn shape(&self, input: usize) -> AutoencoderShape {
        let (scale, offset) = match self.kind {
            SchemeKind::LatentUniform | SchemeKind::LatentVq => (UNIFORM_LATENT_SCALE, UNIFORM_LATENT_OFFSET),
            _ => (NEURAL_LATENT_SCALE, 0.0),
        };
        let shape = AutoencoderShape::new(input, self.latent, self.hidden, self.depth)
            .with_latent_map(self.latent_scale.unwrap_or(scale), self.latent_offset.unwrap_or(offset));
        match self.kind {
            SchemeKind::LatentUniform | SchemeKind::LatentVq => shape.bounded(),
            _ => shape,
        }
    }
}

/// Train/test channel pairs evaluated as extra "mismatched" rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MismatchConfig {
    pub test_snr_db: Vec<f64>,
    pub test_taps: Vec<usize>,
}

impl Default for MismatchConfig {
    fn default() -> Self {
        Self {
            test_snr_db: vec![-5.0, 15.0],
            test_taps: vec![1, 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub schemes: Vec<SchemeKind>,
    pub q_grid: Vec<u32>,
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Uplink only.
    pub mismatch: Option<MismatchConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemes: vec![SchemeKind::ClassicalScalar, SchemeKind::ClassicalVector, SchemeKind::Neural],
            q_grid: vec![4, 5, 6, 7],
            lambda_grid: LAMBDA_GRID.to_vec(),
            seeds: vec![0],
            mismatch: None,
        }
    }
}

/// Numerology recorded alongside results; not used in computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Metadata {
    pub bandwidth_mhz: f64,
    pub subcarrier_spacing_khz: f64,
    pub sample_rate_msps: f64,
}

impl Default for Metadata {
    fn default() -> Self {
        Self {
            bandwidth_mhz: 20.0,
            subcarrier_spacing_khz: 60.0,
            sample_rate_msps: 30.72,
        }
    }
}

/// Training defaults at desk scale (see the README for the rationale).
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 10,
        lr: 8e-3,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub frame: FrameConfig,
    pub channel: Option<ChannelConfig>,
    pub resampler: ResamplerSpec,
    pub scaling: ScalingSection,
    pub dataset: DatasetConfig,
    pub scheme: SchemeConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
    pub output: PathBuf,
    pub metadata: Metadata,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frame: FrameConfig::default(),
            channel: None,
            resampler: ResamplerSpec::default(),
            scaling: ScalingSection::default(),
            dataset: DatasetConfig::default(),
            scheme: SchemeConfig::default(),
            train: desk_train_config(),
            sweep: SweepConfig::default(),
            output: PathBuf::from("runs"),
            metadata: Metadata::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline()?;
        if self.channel.is_some() && self.frame.scenario == Scenario::Downlink {
            return Err(Error::Config("a channel applies to the uplink only".into()));
        }
        if self.sweep.mismatch.is_some() && self.frame.scenario == Scenario::Downlink {
            return Err(Error::Config("mismatch rows need an uplink channel".into()));
        }
        Ok(())
    }

    pub fn pipeline(&self) -> Result<Pipeline> {
        let frame = self.frame.spec()?;
        self.resampler.validate()?;
        let n_prime = self.resampler.decimated_len(frame.frame_len())?;
        let scaling = ScalingConfig::new(self.scaling.n_s.unwrap_or(n_prime), self.scaling.q_s)?;
        Ok(Pipeline {
            frame,
            resampler: self.resampler.clone(),
            scaling,
        })
    }

    /// SHA-256 of the canonical TOML rendering, first 16 hex digits.
    pub fn digest(&self) -> Result<String> {
        let text = self.to_toml()?;
        Ok(hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
        let p = cfg.pipeline().unwrap();
        assert_eq!(p.n_prime().unwrap(), 320);
        assert_eq!(p.scaling.n_s, 320);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[frame]\nscenario = \"uplink\"\nbogus = 1\n").is_err());
        assert!(RunConfig::from_toml("typo = 3\n").is_err());
    }

    #[test]
    fn uplink_defaults() {
        let cfg = RunConfig::from_toml("[frame]\nscenario = \"uplink\"\n[channel]\nsnr_db = 15.0\n").unwrap();
        assert_eq!(cfg.pipeline().unwrap().n_prime().unwrap(), 360);
        assert_eq!(cfg.channel.unwrap().n_taps, 7);
        assert!(RunConfig::from_toml("[channel]\nsnr_db = 1.0\n").is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.scheme.lambda = 1e3;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
        assert_eq!(a.digest().unwrap(), RunConfig::default().digest().unwrap());
    }
}
