//! Trained-model container.
//!
//! ```text
//! magic "CPRB" | version u32 LE | manifest length u32 LE | manifest JSON
//! arrays in manifest order, f64 LE
//! ```
//!
//! The manifest holds the pipeline, scheme metadata (shapes, codebook
//! sizes, entropy tables), the training config snapshot and the name and
//! shape of every array.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::advanced::{RateLevel, RefinementStack, VariableRateSet};
use crate::classical::{ScalarCodebook, VectorCodebook};
use crate::codec::{Codec, Pipeline};
use crate::entropy::{EntropyTable, FactorizedPrior, NeuralModel};
use crate::error::{Error, Result};
use crate::latent::model::VqSchedule;
use crate::latent::{Autoencoder, AutoencoderShape, LatentUniformModel, LatentVqModel};
use crate::nn::ParamSet;

pub const MAGIC: &[u8; 4] = b"CPRB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub kind: String,
    pub pipeline: Pipeline,
    pub model: serde_json::Value,
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub history: serde_json::Value,
    pub arrays: Vec<ArrayInfo>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub manifest: Manifest,
    pub data: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VectorMeta {
    block_dim: usize,
    q_bits: u32,
    code_lengths: Option<Vec<u8>>,
    alpha: f64,
    entropy_coded: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UniformMeta {
    shape: AutoencoderShape,
    q_bits: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VqMeta {
    shape: AutoencoderShape,
    b: usize,
    q_bits: u32,
    beta: f64,
    schedule: VqSchedule,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuralMeta {
    shape: AutoencoderShape,
    lambda: f64,
    residual: bool,
    table: Option<EntropyTable>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LevelMeta {
    a: f64,
    table: Option<EntropyTable>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VariableRateMeta {
    base: NeuralMeta,
    levels: Vec<LevelMeta>,
    rate: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RefinementMeta {
    layers: Vec<NeuralMeta>,
    decode_layers: usize,
}

fn to_json<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn from_json<T: for<'de> Deserialize<'de>>(v: &serde_json::Value) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::Format(format!("bundle manifest: {e}")))
}

fn table(t: Option<EntropyTable>) -> Result<Option<EntropyTable>> {
    t.map(EntropyTable::rebuild).transpose()
}

fn neural_meta(m: &NeuralModel) -> NeuralMeta {
    NeuralMeta {
        shape: m.ae.shape,
        lambda: m.lambda,
        residual: m.residual,
        table: m.table.clone(),
    }
}

#[derive(Default)]
struct Arrays {
    info: Vec<ArrayInfo>,
    data: Vec<Vec<f64>>,
}

impl Arrays {
    fn push(&mut self, name: String, shape: Vec<usize>, data: Vec<f64>) {
        self.info.push(ArrayInfo { name, shape });
        self.data.push(data);
    }

    fn params(&mut self, prefix: &str, p: &ParamSet) {
        for s in &p.specs {
            self.push(format!("{prefix}{}", s.name), s.shape.clone(), p.data[s.range()].to_vec());
        }
    }

    fn neural(&mut self, prefix: &str, m: &NeuralModel) {
        self.params(&format!("{prefix}ae/"), &m.ae.params);
        self.params(&format!("{prefix}prior/"), &m.prior.params);
    }
}

impl ModelBundle {
    pub fn from_codec(codec: &Codec, pipeline: &Pipeline, config: serde_json::Value, history: serde_json::Value) -> Result<Self> {
        let mut a = Arrays::default();
        let (kind, model) = match codec {
            Codec::Scalar(cb) => {
                a.push("levels".into(), vec![cb.levels.len()], cb.levels.clone());
                ("classical-scalar", serde_json::json!({ "q_bits": cb.q_bits }))
            }
            Codec::Vector { codebook, entropy_coded } => {
                a.push("vectors".into(), vec![codebook.rows(), codebook.block_dim], codebook.vectors.clone());
                let meta = VectorMeta {
                    block_dim: codebook.block_dim,
                    q_bits: codebook.q_bits,
                    code_lengths: codebook.code_lengths.clone(),
                    alpha: codebook.alpha,
                    entropy_coded: *entropy_coded,
                };
                ("classical-vector", to_json(&meta)?)
            }
            Codec::LatentUniform(m) => {
                a.params("ae/", &m.ae.params);
                ("latent-uniform", to_json(&UniformMeta { shape: m.ae.shape, q_bits: m.q_bits })?)
            }
            Codec::LatentVq(m) => {
                a.params("ae/", &m.ae.params);
                a.push("codebook".into(), vec![m.codebook.rows(), m.codebook.b], m.codebook.e.clone());
                let meta = VqMeta {
                    shape: m.ae.shape,
                    b: m.codebook.b,
                    q_bits: m.codebook.q_bits,
                    beta: m.codebook.beta,
                    schedule: m.schedule,
                    seed: m.seed,
                };
                ("latent-vq", to_json(&meta)?)
            }
            Codec::Neural(m) => {
                a.neural("", m);
                ("neural", to_json(&neural_meta(m))?)
            }
            Codec::VariableRate { set, rate } => {
                a.neural("", &set.base);
                for (w, lv) in set.levels.iter().enumerate() {
                    a.params(&format!("rate{w}/prior/"), &lv.prior.params);
                }
                let meta = VariableRateMeta {
                    base: neural_meta(&set.base),
                    levels: set.levels.iter().map(|l| LevelMeta { a: l.a, table: l.table.clone() }).collect(),
                    rate: *rate,
                };
                ("variable-rate", to_json(&meta)?)
            }
            Codec::Refinement { stack, layers } => {
                for (l, m) in stack.layers.iter().enumerate() {
                    a.neural(&format!("layer{l}/"), m);
                }
                let meta = RefinementMeta {
                    layers: stack.layers.iter().map(neural_meta).collect(),
                    decode_layers: *layers,
                };
                ("refinement", to_json(&meta)?)
            }
        };
        Ok(Self {
            manifest: Manifest {
                format_version: VERSION,
                kind: kind.into(),
                pipeline: pipeline.clone(),
                model,
                config,
                history,
                arrays: a.info,
            },
            data: a.data,
        })
    }

    pub fn array(&self, name: &str) -> Result<&[f64]> {
        self.manifest
            .arrays
            .iter()
            .position(|a| a.name == name)
            .map(|i| self.data[i].as_slice())
            .ok_or_else(|| Error::Format(format!("bundle has no array {name}")))
    }

    /// Fills a parameter layout from the arrays under `prefix`.
    fn fill(&self, prefix: &str, mut p: ParamSet) -> Result<ParamSet> {
        for s in p.specs.clone() {
            let name = format!("{prefix}{}", s.name);
            let i = self
                .manifest
                .arrays
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| Error::Format(format!("bundle has no array {name}")))?;
            if self.manifest.arrays[i].shape != s.shape {
                return Err(Error::Format(format!("array {name} has the wrong shape")));
            }
            p.data[s.range()].copy_from_slice(&self.data[i]);
        }
        Ok(p)
    }

    fn autoencoder(&self, prefix: &str, shape: AutoencoderShape) -> Result<Autoencoder> {
        let params = self.fill(prefix, Autoencoder::zeroed(shape).params)?;
        Autoencoder::from_params(shape, params)
    }

    fn prior(&self, prefix: &str, channels: usize) -> Result<FactorizedPrior> {
        let mut p = FactorizedPrior::new(channels, &mut rand::rngs::mock::StepRng::new(0, 0));
        p.params = self.fill(prefix, p.params)?;
        Ok(p)
    }

    fn neural(&self, prefix: &str, meta: NeuralMeta) -> Result<NeuralModel> {
        Ok(NeuralModel {
            ae: self.autoencoder(&format!("{prefix}ae/"), meta.shape)?,
            prior: self.prior(&format!("{prefix}prior/"), meta.shape.latent)?,
            lambda: meta.lambda,
            residual: meta.residual,
            table: table(meta.table)?,
        })
    }

    pub fn to_codec(&self) -> Result<Codec> {
        let model = &self.manifest.model;
        Ok(match self.manifest.kind.as_str() {
            "classical-scalar" => {
                let q = model
                    .get("q_bits")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| Error::Format("scalar bundle lacks q_bits".into()))?;
                Codec::Scalar(ScalarCodebook::new(self.array("levels")?.to_vec(), q as u32)?)
            }
            "classical-vector" => {
                let m: VectorMeta = from_json(model)?;
                Codec::Vector {
                    codebook: VectorCodebook {
                        vectors: self.array("vectors")?.to_vec(),
                        block_dim: m.block_dim,
                        q_bits: m.q_bits,
                        code_lengths: m.code_lengths,
                        alpha: m.alpha,
                    },
                    entropy_coded: m.entropy_coded,
                }
            }
            "latent-uniform" => {
                let m: UniformMeta = from_json(model)?;
                Codec::LatentUniform(LatentUniformModel {
                    ae: self.autoencoder("ae/", m.shape)?,
                    q_bits: m.q_bits,
                })
            }
            "latent-vq" => {
                let m: VqMeta = from_json(model)?;
                let mut vq = LatentVqModel::from_warm(self.autoencoder("ae/", m.shape)?, m.b, m.q_bits, m.beta, m.schedule, m.seed)?;
                let e = self.array("codebook")?;
                if e.len() != vq.codebook.e.len() {
                    return Err(Error::Format("codebook size does not match b and Q".into()));
                }
                vq.codebook.e = e.to_vec();
                vq.progress.initialized = true;
                Codec::LatentVq(vq)
            }
            "neural" => Codec::Neural(self.neural("", from_json(model)?)?),
            "variable-rate" => {
                let m: VariableRateMeta = from_json(model)?;
                let channels = m.base.shape.latent;
                let base = self.neural("", m.base)?;
                let levels = m
                    .levels
                    .into_iter()
                    .enumerate()
                    .map(|(w, l)| {
                        Ok(RateLevel {
                            a: l.a,
                            prior: self.prior(&format!("rate{w}/prior/"), channels)?,
                            table: table(l.table)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Codec::VariableRate {
                    set: VariableRateSet { base, levels },
                    rate: m.rate,
                }
            }
            "refinement" => {
                let m: RefinementMeta = from_json(model)?;
                let layers = m
                    .layers
                    .into_iter()
                    .enumerate()
                    .map(|(l, meta)| self.neural(&format!("layer{l}/"), meta))
                    .collect::<Result<Vec<_>>>()?;
                Codec::Refinement {
                    stack: RefinementStack { layers },
                    layers: m.decode_layers,
                }
            }
            k => return Err(Error::Format(format!("unknown bundle kind {k}"))),
        })
    }

    /// Total size of encoder and decoder arrays.
    pub fn transform_parameters(&self) -> usize {
        self.manifest
            .arrays
            .iter()
            .filter(|a| a.name.contains("ae/"))
            .map(|a| a.shape.iter().product::<usize>())
            .sum()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.data.len() != self.manifest.arrays.len() {
            return Err(Error::Format("array count does not match the manifest".into()));
        }
        for (a, d) in self.manifest.arrays.iter().zip(&self.data) {
            if a.shape.iter().product::<usize>() != d.len() {
                return Err(Error::Format(format!("array {} does not match its shape", a.name)));
            }
        }
        let manifest = serde_json::to_vec_pretty(&self.manifest).map_err(|e| Error::Format(e.to_string()))?;
        let mut out = Vec::with_capacity(12 + manifest.len() + 8 * self.data.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for d in &self.data {
            for v in d {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(Error::Format("not a CPRB model bundle".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("bundle version {version} is not supported (expected {VERSION})")));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let json = bytes
            .get(12..12 + len)
            .ok_or_else(|| Error::Format("truncated bundle manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(json).map_err(|e| Error::Format(format!("bundle manifest: {e}")))?;
        let mut pos = 12 + len;
        let mut data = Vec::with_capacity(manifest.arrays.len());
        for a in &manifest.arrays {
            let n: usize = a.shape.iter().product();
            let raw = bytes
                .get(pos..pos + 8 * n)
                .ok_or_else(|| Error::Format(format!("truncated array {}", a.name)))?;
            data.push(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect());
            pos += 8 * n;
        }
        if pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after the last array", bytes.len() - pos)));
        }
        Ok(Self { manifest, data })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
