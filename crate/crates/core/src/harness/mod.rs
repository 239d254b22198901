//! Operational surface: configuration, datasets, training, coding,
//! sweeps and reports.

pub mod config;
pub mod data;
pub mod report;
pub mod schemes;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use log::{info, warn};
use num_complex::Complex64;
use serde::Serialize;

use crate::bitstream::{load_records, save_records};
use crate::bundle::{ArrayInfo, ModelBundle};
use crate::codec::{decode_records, encode_records, measure, Codec, Evaluation, Pipeline};
use crate::error::{Error, Result};
use crate::latent::{Autoencoder, PreparedSet};
use crate::multirate::decimate;
use crate::signal::covariance::sample_mean;
use crate::signal::dataset::{FrameSet, SampleFormat};
use crate::signal::{analytic_covariance, center_spectrum, empirical_covariance, generate_frame, CovarianceReport, Scenario};
use crate::rng;

use config::{ChannelConfig, RunConfig, SchemeConfig, SchemeKind};
use data::{generate_split, Prepared, Split};
use report::{ordering_checks, render_svg, write_csv, Check, RdRow, MATCHED};
use schemes::{train_scheme, train_warm, Trained};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "CPRI_THREADS";

/// Thread count from [`THREADS_ENV`], or 1. `deterministic` forces 1.
pub fn thread_count(deterministic: bool) -> Result<usize> {
    if deterministic {
        return Ok(1);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(1),
    }
}

/// One trained artifact of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub kind: SchemeKind,
    /// Q or λ; `None` for schemes whose bundle covers several rates.
    pub param: Option<f64>,
    pub seed: u64,
}

impl SweepPoint {
    pub fn file_name(&self) -> String {
        let p = match self.param {
            None => "all".to_string(),
            Some(p) if self.kind.rate_is_lambda() => format!("l{p}"),
            Some(p) => format!("q{p}"),
        };
        format!("{}-{p}-s{}.cprb", self.kind.name(), self.seed)
    }

    /// Scheme settings for this point.
    pub fn scheme(&self, base: &SchemeConfig) -> SchemeConfig {
        let mut s = base.clone();
        s.kind = self.kind;
        match self.param {
            Some(p) if self.kind.rate_is_lambda() => s.lambda = p,
            Some(p) => s.q_bits = p as u32,
            None => {}
        }
        s
    }
}

/// Every point of the configured sweep.
pub fn sweep_points(cfg: &RunConfig) -> Vec<SweepPoint> {
    let mut out = Vec::new();
    for &seed in &cfg.sweep.seeds {
        for &kind in &cfg.sweep.schemes {
            match kind {
                SchemeKind::Refinement | SchemeKind::VariableRate => out.push(SweepPoint { kind, param: None, seed }),
                SchemeKind::Neural => out.extend(cfg.sweep.lambda_grid.iter().map(|&l| SweepPoint { kind, param: Some(l), seed })),
                _ => out.extend(cfg.sweep.q_grid.iter().map(|&q| SweepPoint { kind, param: Some(q as f64), seed })),
            }
        }
    }
    out
}

pub fn bundle_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.join("bundles")
}

/// Bundle for a trained scheme, with the configuration snapshot.
pub fn make_bundle(cfg: &RunConfig, scheme: &SchemeConfig, seed: u64, trained: &Trained) -> Result<ModelBundle> {
    let mut snapshot = cfg.clone();
    snapshot.scheme = scheme.clone();
    snapshot.train.seed = seed;
    let config = serde_json::to_value(&snapshot).map_err(|e| Error::Format(e.to_string()))?;
    ModelBundle::from_codec(&trained.codec, &cfg.pipeline()?, config, trained.history.clone())
}

/// Trains the configured scheme once and writes its bundle.
pub fn cmd_train(cfg: &RunConfig, data: &Prepared, out: &Path) -> Result<ModelBundle> {
    let trained = train_scheme(&cfg.scheme, &data.train, &data.val, &cfg.train, None)?;
    let bundle = make_bundle(cfg, &cfg.scheme, cfg.train.seed, &trained)?;
    bundle.save(out)?;
    info!("wrote {}", out.display());
    Ok(bundle)
}

/// Trains every sweep point into the bundle directory, one bundle per Q or
/// λ. Existing bundles are kept unless `force` is set. Fixed-rate latent
/// schemes share one warm-up per seed.
pub fn cmd_train_grid(cfg: &RunConfig, data: &Prepared, force: bool) -> Result<Vec<PathBuf>> {
    let dir = bundle_dir(cfg);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut warm: HashMap<u64, Autoencoder> = HashMap::new();
    let mut out = Vec::new();
    for p in sweep_points(cfg) {
        let path = dir.join(p.file_name());
        if path.exists() && !force {
            info!("keeping {}", path.display());
            out.push(path);
            continue;
        }
        let scheme = p.scheme(&cfg.scheme);
        let tcfg = crate::train::TrainConfig {
            seed: p.seed,
            ..cfg.train.clone()
        };
        let shared = if matches!(p.kind, SchemeKind::LatentUniform | SchemeKind::LatentVq) && scheme.warm_epochs > 0 {
            if !warm.contains_key(&p.seed) {
                let (ae, _) = train_warm(&scheme, &data.train, &data.val, &tcfg)?;
                warm.insert(p.seed, ae);
            }
            warm.get(&p.seed)
        } else {
            None
        };
        let trained = train_scheme(&scheme, &data.train, &data.val, &tcfg, shared)?;
        make_bundle(cfg, &scheme, p.seed, &trained)?.save(&path)?;
        info!("wrote {}", path.display());
        out.push(path);
    }
    Ok(out)
}

fn load_frames(path: &Path, pipeline: &Pipeline) -> Result<FrameSet> {
    let set = FrameSet::load(path)?;
    if set.spec != pipeline.frame {
        return Err(Error::Config(format!("{} does not match the bundle's frame layout", path.display())));
    }
    Ok(set)
}

fn prepared_for(bundle: &ModelBundle, frames: &FrameSet) -> Result<PreparedSet> {
    bundle.manifest.pipeline.prepare(&frames.frames)
}

/// Encodes a frame file into a record file of framed bitstreams.
pub fn cmd_encode(bundle_path: &Path, frames_path: &Path, out: &Path) -> Result<usize> {
    let bundle = ModelBundle::load(bundle_path)?;
    let codec = bundle.to_codec()?;
    let frames = load_frames(frames_path, &bundle.manifest.pipeline)?;
    let set = prepared_for(&bundle, &frames)?;
    let records = encode_records(&codec, &set, 32)?;
    save_records(out, &records)?;
    Ok(records.len())
}

/// Decodes a record file into time-domain frames (stored as f64).
pub fn cmd_decode(bundle_path: &Path, records_path: &Path, out: &Path) -> Result<usize> {
    let bundle = ModelBundle::load(bundle_path)?;
    let codec = bundle.to_codec()?;
    let records = load_records(records_path)?;
    let frames = decode_records(&codec, &bundle.manifest.pipeline, &records)?;
    let n = frames.len();
    FrameSet {
        spec: bundle.manifest.pipeline.frame.clone(),
        frames,
    }
    .save_as(out, SampleFormat::F64)?;
    Ok(n)
}

/// Evaluates a bundle on a frame file. With `coded = Some((records,
/// decoded))` the measurement uses files written by encode and decode
/// instead of the in-memory path.
pub fn cmd_evaluate(bundle_path: &Path, frames_path: &Path, coded: Option<(&Path, &Path)>) -> Result<Evaluation> {
    let bundle = ModelBundle::load(bundle_path)?;
    let codec = bundle.to_codec()?;
    let pipeline = &bundle.manifest.pipeline;
    let frames = load_frames(frames_path, pipeline)?;
    let set = prepared_for(&bundle, &frames)?;
    match coded {
        None => crate::codec::evaluate(&codec, pipeline, &set, 32),
        Some((rec, dec)) => {
            let records = load_records(rec)?;
            let decoded = FrameSet::load(dec)?;
            measure(&codec, pipeline, &set, &records, &decoded.frames)
        }
    }
}

/// Rates a multi-rate bundle is evaluated at, with the row's parameter.
fn rate_variants(codec: &Codec) -> Vec<(f64, Codec)> {
    match codec {
        Codec::Refinement { stack, .. } => (1..=stack.len())
            .map(|l| {
                (
                    l as f64,
                    Codec::Refinement {
                        stack: stack.clone(),
                        layers: l,
                    },
                )
            })
            .collect(),
        Codec::VariableRate { set, .. } => set
            .levels
            .iter()
            .enumerate()
            .map(|(w, lv)| (lv.a, Codec::VariableRate { set: set.clone(), rate: w }))
            .collect(),
        c => vec![(f64::NAN, c.clone())],
    }
}

/// Test sets of a sweep: the matched split plus any mismatched channels.
pub fn sweep_test_sets(cfg: &RunConfig, matched: &PreparedSet) -> Result<Vec<(String, PreparedSet)>> {
    let mut out = vec![(MATCHED.to_string(), matched.clone())];
    let Some(mm) = &cfg.sweep.mismatch else {
        return Ok(out);
    };
    let base = cfg.channel.clone().unwrap_or_default();
    let mut variants: Vec<(String, ChannelConfig)> = Vec::new();
    for &snr in &mm.test_snr_db {
        variants.push((format!("mismatched:snr={snr}dB"), ChannelConfig { snr_db: snr, ..base.clone() }));
    }
    for &taps in &mm.test_taps {
        variants.push((format!("mismatched:taps={taps}"), ChannelConfig { n_taps: taps, ..base.clone() }));
    }
    for (tag, ch) in variants {
        let frames = generate_split(cfg, Split::Test, matched.len(), Some(&ch.spec()))?;
        out.push((tag, data::prepare(cfg, &frames.frames, &matched.op)?));
    }
    Ok(out)
}

/// Result of a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepOutput {
    pub rows: Vec<RdRow>,
    pub checks: Vec<Check>,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

/// Evaluates every sweep bundle on the test split (and mismatched test
/// sets), writes the CSV and SVG, and runs the ordering checks. Points
/// without a bundle are skipped with a warning. Points are spread over
/// `threads` workers; each row is deterministic on its own.
pub fn cmd_sweep(cfg: &RunConfig, test: &PreparedSet, threads: usize) -> Result<SweepOutput> {
    let digest = cfg.digest()?;
    let sets = sweep_test_sets(cfg, test)?;
    let dir = bundle_dir(cfg);
    let points: Vec<(SweepPoint, PathBuf)> = sweep_points(cfg)
        .into_iter()
        .filter_map(|p| {
            let path = dir.join(p.file_name());
            if path.exists() {
                Some((p, path))
            } else {
                warn!("no bundle at {}; row skipped", path.display());
                None
            }
        })
        .collect();
    let pipeline = cfg.pipeline()?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Vec<RdRow>>)>> = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..threads.clamp(1, points.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((p, path)) = points.get(i) else { break };
                let r = sweep_rows(p, path, &pipeline, &sets, &digest);
                results.lock().expect("sweep worker panicked").push((i, r));
            });
        }
    });
    let mut results = results.into_inner().expect("sweep worker panicked");
    results.sort_by_key(|(i, _)| *i);
    let mut rows = Vec::new();
    for (_, r) in results {
        rows.extend(r?);
    }
    let checks = ordering_checks(&rows);
    for c in &checks {
        if c.passed {
            info!("check passed: {} ({})", c.name, c.detail);
        } else {
            warn!("check FAILED: {} ({})", c.name, c.detail);
        }
    }
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    let scenario = match cfg.frame.scenario {
        Scenario::Downlink => "downlink",
        Scenario::Uplink => "uplink",
    };
    let csv = cfg.output.join(format!("rd-{scenario}.csv"));
    let svg = cfg.output.join(format!("rd-{scenario}.svg"));
    write_csv(&csv, &rows)?;
    std::fs::write(&svg, render_svg(&rows, &format!("R-D, {scenario}"))).map_err(|e| Error::io(&svg, e))?;
    Ok(SweepOutput { rows, checks, csv, svg })
}

fn sweep_rows(p: &SweepPoint, path: &Path, pipeline: &Pipeline, sets: &[(String, PreparedSet)], digest: &str) -> Result<Vec<RdRow>> {
    let bundle = ModelBundle::load(path)?;
    if &bundle.manifest.pipeline != pipeline {
        return Err(Error::Config(format!("{} was trained for a different pipeline", path.display())));
    }
    let codec = bundle.to_codec()?;
    let mut rows = Vec::new();
    for (param, c) in rate_variants(&codec) {
        for (condition, set) in sets {
            let started = Instant::now();
            let ev = crate::codec::evaluate(&c, pipeline, set, 32)?;
            rows.push(RdRow {
                scheme: p.kind.name().into(),
                rate_param: p.param.unwrap_or(param),
                bits_per_element: ev.bits_per_element,
                cr: ev.cr,
                evm_pct: ev.evm.percent,
                evm_db: ev.evm.db,
                evm_p5_db: ev.evm_p5_db,
                evm_p95_db: ev.evm_p95_db,
                alpha: ev.alpha,
                seed: p.seed,
                wall_s: started.elapsed().as_secs_f64(),
                condition: condition.clone(),
                config_digest: digest.to_string(),
            });
        }
    }
    Ok(rows)
}

/// Empirical covariance of `frames` noiseless decimated downlink frames
/// against the analytic guard-band model.
pub fn covcheck(cfg: &RunConfig, frames: usize, seed: u64) -> Result<CovarianceReport> {
    let spec = cfg.frame.spec()?;
    if spec.scenario != Scenario::Downlink {
        return Err(Error::Config("the covariance check applies to downlink frames".into()));
    }
    let n_prime = cfg.resampler.decimated_len(spec.frame_len())?;
    if n_prime < spec.n_sym || (n_prime - spec.n_sym) % 2 != 0 {
        return Err(Error::Config(format!("N′ = {n_prime} cannot hold {} centred subcarriers", spec.n_sym)));
    }
    let k_star = (n_prime - spec.n_sym) / 2;
    let x: Vec<Vec<Complex64>> = (0..frames as u64)
        .map(|i| {
            let f = generate_frame(&spec, None, rng::derive_seed(seed, rng::purpose::SPLIT, 99), i)?;
            Ok(center_spectrum(&decimate(&f.samples, &cfg.resampler)?))
        })
        .collect::<Result<_>>()?;
    // Unit-power symbols through a unitary IDFT give per-sample power
    // n_sym/N_fft; the resampler keeps amplitude, so P·n_sym/N′ equals it.
    let power = n_prime as f64 / spec.n_fft as f64;
    let analytic = analytic_covariance(n_prime, k_star, power)?;
    let empirical = empirical_covariance(&x)?;
    let mean = sample_mean(&x)?;
    let max_mean_z = mean
        .iter()
        .enumerate()
        .map(|(n, m)| m.norm() / (empirical.get(n, n).re / frames as f64).sqrt())
        .fold(0.0, f64::max);
    Ok(CovarianceReport {
        rel_frobenius_error: empirical.rel_frobenius_error(&analytic),
        analytic,
        empirical,
        frames,
        n_prime,
        k_star,
        power,
        max_mean_z,
    })
}

/// Runs [`covcheck`] and writes the report as JSON.
pub fn cmd_covcheck(cfg: &RunConfig, frames: usize, out: &Path) -> Result<CovarianceReport> {
    let r = covcheck(cfg, frames, cfg.dataset.seed)?;
    let json = serde_json::to_string_pretty(&r).map_err(|e| Error::Format(e.to_string()))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(out, json).map_err(|e| Error::io(out, e))?;
    Ok(r)
}

/// What `inspect-bundle` prints.
#[derive(Debug, Clone, Serialize)]
pub struct BundleSummary {
    pub kind: String,
    pub format_version: u32,
    pub arrays: Vec<ArrayInfo>,
    pub total_parameters: usize,
    /// Parameters of the learned transforms (encoder and decoder).
    pub transform_parameters: usize,
    pub n_prime: usize,
}

pub fn cmd_inspect_bundle(path: &Path) -> Result<BundleSummary> {
    let b = ModelBundle::load(path)?;
    Ok(BundleSummary {
        kind: b.manifest.kind.clone(),
        format_version: b.manifest.format_version,
        total_parameters: b.data.iter().map(Vec::len).sum(),
        transform_parameters: b.transform_parameters(),
        arrays: b.manifest.arrays.clone(),
        n_prime: b.manifest.pipeline.n_prime()?,
    })
}
