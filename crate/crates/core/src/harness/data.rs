//! Dataset splits: generation, storage and preparation.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use num_complex::Complex64;

use super::config::RunConfig;
use crate::error::{Error, Result};
use crate::latent::{PreparedSet, ReconOp};
use crate::rng;
use crate::signal::dataset::FrameSet;
use crate::signal::{generate_frame, ChannelSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn index(self) -> u64 {
        self as u64
    }

    pub fn count(self, cfg: &RunConfig) -> usize {
        match self {
            Split::Train => cfg.dataset.train,
            Split::Val => cfg.dataset.val,
            Split::Test => cfg.dataset.test,
        }
    }
}

/// The channel the configuration trains on (uplink only).
pub fn channel_spec(cfg: &RunConfig) -> Option<ChannelSpec> {
    match cfg.frame.scenario {
        Scenario::Downlink => None,
        Scenario::Uplink => Some(cfg.channel.clone().unwrap_or_default().spec()),
    }
}

/// Frames of one split, rounded to storage precision so that in-memory
/// and on-disk datasets agree.
pub fn generate_split(cfg: &RunConfig, split: Split, count: usize, channel: Option<&ChannelSpec>) -> Result<FrameSet> {
    let spec = cfg.frame.spec()?;
    let seed = rng::derive_seed(cfg.dataset.seed, rng::purpose::SPLIT, split.index());
    let frames = (0..count as u64)
        .map(|i| generate_frame(&spec, channel, seed, i).map(|f| f.samples))
        .collect::<Result<Vec<_>>>()?;
    let mut set = FrameSet { spec, frames };
    set.quantize_to_storage();
    Ok(set)
}

pub fn split_path(dir: &Path, split: Split) -> PathBuf {
    dir.join(format!("{}.cprf", split.name()))
}

/// Writes the three splits under the dataset directory.
pub fn gen_dataset(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let channel = channel_spec(cfg);
    let mut out = Vec::new();
    for split in Split::ALL {
        let set = generate_split(cfg, split, split.count(cfg), channel.as_ref())?;
        let path = split_path(&cfg.dataset.dir, split);
        set.save(&path)?;
        info!("wrote {} frames to {}", set.frames.len(), path.display());
        out.push(path);
    }
    Ok(out)
}

pub fn load_split(cfg: &RunConfig, split: Split) -> Result<FrameSet> {
    let path = split_path(&cfg.dataset.dir, split);
    let set = FrameSet::load(&path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(format!("{} is missing; run gen-dataset first", path.display())),
        e => e,
    })?;
    if set.spec != cfg.frame.spec()? {
        return Err(Error::Config(format!("{} was generated for a different frame layout", path.display())));
    }
    Ok(set)
}

/// Prepared train, validation and test sets sharing one reconstruction
/// operator.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: PreparedSet,
    pub val: PreparedSet,
    pub test: PreparedSet,
}

pub fn prepare(cfg: &RunConfig, frames: &[Vec<Complex64>], op: &Arc<ReconOp>) -> Result<PreparedSet> {
    let p = cfg.pipeline()?;
    PreparedSet::prepare_with(frames, &p.frame, &p.resampler, &p.scaling, op.clone())
}

pub fn recon_op(cfg: &RunConfig) -> Result<Arc<ReconOp>> {
    Ok(Arc::new(ReconOp::new(&cfg.frame.spec()?, &cfg.resampler)?))
}

impl Prepared {
    pub fn from_sets(cfg: &RunConfig, train: &FrameSet, val: &FrameSet, test: &FrameSet) -> Result<Self> {
        let op = recon_op(cfg)?;
        Ok(Self {
            train: prepare(cfg, &train.frames, &op)?,
            val: prepare(cfg, &val.frames, &op)?,
            test: prepare(cfg, &test.frames, &op)?,
        })
    }

    /// Loads the splits from the dataset directory.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let [a, b, c] = Split::ALL.map(|s| load_split(cfg, s));
        Self::from_sets(cfg, &a?, &b?, &c?)
    }

    /// Generates the splits in memory.
    pub fn generate(cfg: &RunConfig) -> Result<Self> {
        let ch = channel_spec(cfg);
        let [a, b, c] = Split::ALL.map(|s| generate_split(cfg, s, s.count(cfg), ch.as_ref()));
        Self::from_sets(cfg, &a?, &b?, &c?)
    }
}
