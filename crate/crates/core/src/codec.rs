//! Every scheme behind one encode/decode path: frames in, framed
//! bitstreams out, and back to time-domain frames at the original rate.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::advanced::{RefinementStack, VariableRateSet};
use crate::bits::{BitReader, BitWriter, Payload};
use crate::bitstream::{Bitstream, Header, SchemeId, SINGLE_RATE};
use crate::classical::{apply_scalar, apply_vector, compression_ratio, decode_scalar, decode_vector, deinterleave, interleave, ScalarCodebook, VectorCodebook};
use crate::entropy::{EntropyTable, NeuralModel};
use crate::error::{Error, Result};
use crate::latent::{LatentUniformModel, LatentVqModel, PreparedSet};
use crate::multirate::{interpolate, ResamplerSpec};
use crate::scaling::{rescale, ScalingConfig};
use crate::signal::evm::{Evm, EvmAccumulator};
use crate::signal::{add_cyclic_prefix, FrameSpec, Scenario};

/// Frame layout, resampler and block scaling shared by encoder and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub frame: FrameSpec,
    pub resampler: ResamplerSpec,
    pub scaling: ScalingConfig,
}

impl Pipeline {
    pub fn n_prime(&self) -> Result<usize> {
        self.resampler.decimated_len(self.frame.frame_len())
    }

    pub fn prepare(&self, frames: &[Vec<Complex64>]) -> Result<PreparedSet> {
        PreparedSet::prepare(frames, &self.frame, &self.resampler, &self.scaling)
    }

    /// Time-domain frame from a scaled-domain reconstruction. Downlink
    /// output gets its cyclic prefix re-inserted.
    pub fn to_time(&self, s_hat: &[f64], t: &[u32]) -> Result<Vec<Complex64>> {
        let x = interpolate(&rescale(&deinterleave(s_hat), t, &self.scaling)?, &self.resampler)?;
        Ok(match self.frame.scenario {
            Scenario::Downlink => add_cyclic_prefix(&x, self.frame.n_cp),
            Scenario::Uplink => x,
        })
    }

    /// Occupied spectrum of a decoded frame (as produced by [`to_time`](Self::to_time)).
    pub fn decoded_spectrum(&self, decoded: &[Complex64]) -> Result<Vec<Complex64>> {
        match self.frame.scenario {
            Scenario::Downlink => {
                let n_cp = self.frame.n_cp;
                if decoded.len() < n_cp {
                    return Err(Error::InputShape("decoded frame is shorter than its prefix".into()));
                }
                self.frame.occupied_spectrum(&decoded[n_cp..])
            }
            Scenario::Uplink => self.frame.occupied_spectrum(decoded),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Codec {
    Scalar(ScalarCodebook),
    Vector { codebook: VectorCodebook, entropy_coded: bool },
    LatentUniform(LatentUniformModel),
    LatentVq(LatentVqModel),
    Neural(NeuralModel),
    VariableRate { set: VariableRateSet, rate: usize },
    Refinement { stack: RefinementStack, layers: usize },
}

fn fixed_payload(p: &Payload, bits: usize) -> Result<Payload> {
    if p.bytes.len() != bits.div_ceil(8) {
        return Err(Error::CorruptStream(format!("payload has {} bytes, expected {}", p.bytes.len(), bits.div_ceil(8))));
    }
    Ok(Payload {
        bytes: p.bytes.clone(),
        bit_len: bits,
    })
}

fn read_fixed(p: &Payload, count: usize, width: u32) -> Result<Vec<u64>> {
    let p = fixed_payload(p, count * width as usize)?;
    let mut r = BitReader::new(&p.bytes);
    (0..count).map(|_| r.read(width)).collect()
}

fn coded_payload(bytes: Vec<u8>) -> Payload {
    Payload {
        bit_len: bytes.len() * 8,
        bytes,
    }
}

fn decode_table(table: &EntropyTable, s: &Bitstream, n_prime: usize) -> Result<Vec<i64>> {
    let (count, _) = s.header.extension.ok_or_else(|| Error::Format("missing symbol count".into()))?;
    if count as usize != n_prime {
        return Err(Error::Format(format!("{count} symbols per channel, model expects {n_prime}")));
    }
    table.decode(&s.payload.bytes, count as usize * table.channels.len())
}

impl Codec {
    pub fn scheme(&self) -> SchemeId {
        match self {
            Codec::Scalar(_) => SchemeId::ClassicalScalar,
            Codec::Vector { entropy_coded: true, .. } => SchemeId::ClassicalVector,
            Codec::Vector { .. } => SchemeId::ClassicalVectorFixed,
            Codec::LatentUniform(_) => SchemeId::LatentUniform,
            Codec::LatentVq(_) => SchemeId::LatentVq,
            Codec::Neural(_) | Codec::VariableRate { .. } => SchemeId::Neural,
            Codec::Refinement { .. } => SchemeId::Refinement,
        }
    }

    /// Bitstreams for frames `idx`: one per frame, or one per layer for
    /// refinement.
    pub fn encode(&self, set: &PreparedSet, idx: &[usize]) -> Result<Vec<Vec<Bitstream>>> {
        let n_prime = set.n_prime();
        let header = |i: usize, scheme: SchemeId, extension: Option<(u32, u8)>| -> Result<Header> {
            Ok(Header {
                scheme,
                scenario: set.frame.scenario,
                n_prime: u16::try_from(n_prime).map_err(|_| Error::Config("N′ exceeds 16 bits".into()))?,
                n_t: u16::try_from(set.frames[i].t.len()).map_err(|_| Error::Config("too many scaling blocks".into()))?,
                q_s: set.scaling.q_s as u8,
                extension,
            })
        };
        let single = |i: usize, payload: Payload, ext: Option<(u32, u8)>| -> Result<Vec<Bitstream>> {
            Ok(vec![Bitstream {
                header: header(i, self.scheme(), ext)?,
                t: set.frames[i].t.clone(),
                payload,
            }])
        };
        let ext = |rate: u8| Some((n_prime as u32, rate));
        match self {
            Codec::Scalar(cb) => idx.iter().map(|&i| single(i, apply_scalar(&deinterleave(&set.frames[i].s), cb).1, None)).collect(),
            Codec::Vector { codebook, entropy_coded } => idx
                .iter()
                .map(|&i| single(i, apply_vector(&deinterleave(&set.frames[i].s), codebook, *entropy_coded)?.1, None))
                .collect(),
            Codec::LatentUniform(m) => {
                let all = m.encode_indices(set, idx)?;
                idx.iter()
                    .zip(all)
                    .map(|(&i, ind)| {
                        let mut w = BitWriter::new();
                        ind.iter().for_each(|&v| w.write(v as u64, m.q_bits));
                        single(i, w.into_payload(), None)
                    })
                    .collect()
            }
            Codec::LatentVq(m) => {
                let all = m.encode_indices(set, idx)?;
                let bits = m.codebook.index_bits();
                idx.iter()
                    .zip(all)
                    .map(|(&i, ind)| {
                        let mut w = BitWriter::new();
                        ind.iter().for_each(|&v| w.write(v as u64, bits));
                        single(i, w.into_payload(), None)
                    })
                    .collect()
            }
            Codec::Neural(m) => {
                let table = m.table()?;
                let all = m.encode_symbols(set, idx)?;
                idx.iter()
                    .zip(all)
                    .map(|(&i, sym)| single(i, coded_payload(table.encode(&sym).bytes), ext(SINGLE_RATE)))
                    .collect()
            }
            Codec::VariableRate { set: vr, rate } => {
                let table = vr.table(*rate)?;
                let all = vr.encode_symbols(set, idx, *rate)?;
                let r = u8::try_from(*rate).map_err(|_| Error::Config("rate index exceeds 8 bits".into()))?;
                idx.iter()
                    .zip(all)
                    .map(|(&i, sym)| single(i, coded_payload(table.encode(&sym).bytes), ext(r)))
                    .collect()
            }
            Codec::Refinement { stack, layers } => {
                let (symbols, _) = stack.encode(set, idx, *layers)?;
                idx.iter()
                    .enumerate()
                    .map(|(b, &i)| {
                        symbols
                            .iter()
                            .enumerate()
                            .map(|(l, per_frame)| {
                                Ok(Bitstream {
                                    header: header(i, SchemeId::Refinement, ext(l as u8))?,
                                    t: set.frames[i].t.clone(),
                                    payload: coded_payload(stack.layers[l].table()?.encode(&per_frame[b]).bytes),
                                })
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// Groups a flat stream into frames. Refinement frames start at layer 0
    /// and keep their longest contiguous layer prefix.
    pub fn group(&self, streams: Vec<Bitstream>) -> Result<Vec<Vec<Bitstream>>> {
        if !matches!(self, Codec::Refinement { .. }) {
            return Ok(streams.into_iter().map(|s| vec![s]).collect());
        }
        let mut frames: Vec<Vec<Bitstream>> = Vec::new();
        let mut intact = true;
        for s in streams {
            let layer = s.header.extension.map(|e| e.1).unwrap_or(u8::MAX);
            if layer == 0 {
                frames.push(vec![s]);
                intact = true;
                continue;
            }
            let cur = frames
                .last_mut()
                .ok_or_else(|| Error::CorruptStream("refinement stream does not start with a base layer".into()))?;
            if intact && layer as usize == cur.len() {
                cur.push(s);
            } else {
                intact = false;
            }
        }
        Ok(frames)
    }

    /// Scaled-domain reconstructions, one per frame group.
    pub fn decode(&self, frames: &[Vec<Bitstream>], n_prime: usize) -> Result<Vec<Vec<f64>>> {
        for f in frames {
            let s = f.first().ok_or_else(|| Error::CorruptStream("empty frame".into()))?;
            if s.header.scheme != self.scheme() {
                return Err(Error::Format(format!("stream is {}, model is {}", s.header.scheme.name(), self.scheme().name())));
            }
            if s.header.n_prime as usize != n_prime {
                return Err(Error::Format(format!("stream has N′ = {}, model expects {n_prime}", s.header.n_prime)));
            }
        }
        let first = |f: &Vec<Bitstream>| f[0].clone();
        match self {
            Codec::Scalar(cb) => frames
                .iter()
                .map(|f| {
                    let p = fixed_payload(&f[0].payload, 2 * cb.q_bits as usize * n_prime)?;
                    Ok(interleave(&decode_scalar(&p, n_prime, cb)?))
                })
                .collect(),
            Codec::Vector { codebook, entropy_coded } => frames
                .iter()
                .map(|f| Ok(interleave(&decode_vector(&f[0].payload, n_prime, codebook, *entropy_coded)?)))
                .collect(),
            Codec::LatentUniform(m) => {
                let count = n_prime * m.ae.shape.latent;
                let ind = frames
                    .iter()
                    .map(|f| Ok(read_fixed(&f[0].payload, count, m.q_bits)?.into_iter().map(|v| v as u32).collect()))
                    .collect::<Result<Vec<Vec<u32>>>>()?;
                batched(&ind, |c| m.decode_indices(c))
            }
            Codec::LatentVq(m) => {
                let count = n_prime * m.ae.shape.latent / m.codebook.b;
                let ind = frames
                    .iter()
                    .map(|f| Ok(read_fixed(&f[0].payload, count, m.codebook.index_bits())?.into_iter().map(|v| v as usize).collect()))
                    .collect::<Result<Vec<Vec<usize>>>>()?;
                batched(&ind, |c| m.decode_indices(c))
            }
            Codec::Neural(m) => {
                let table = m.table()?;
                let sym = frames.iter().map(|f| decode_table(table, &first(f), n_prime)).collect::<Result<Vec<_>>>()?;
                batched(&sym, |c| m.decode_symbols(c, None))
            }
            Codec::VariableRate { set: vr, .. } => {
                let mut by_rate: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (i, f) in frames.iter().enumerate() {
                    let w = f[0].header.extension.map(|e| e.1 as usize).unwrap_or(usize::MAX);
                    by_rate.entry(w).or_default().push(i);
                }
                let mut out = vec![Vec::new(); frames.len()];
                for (w, members) in by_rate {
                    let table = vr.table(w)?;
                    let sym = members.iter().map(|&i| decode_table(table, &frames[i][0], n_prime)).collect::<Result<Vec<_>>>()?;
                    for (&i, rec) in members.iter().zip(batched(&sym, |c| vr.decode_symbols(c, w))?) {
                        out[i] = rec;
                    }
                }
                Ok(out)
            }
            Codec::Refinement { stack, .. } => {
                let mut by_depth: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (i, f) in frames.iter().enumerate() {
                    by_depth.entry(f.len()).or_default().push(i);
                }
                let mut out = vec![Vec::new(); frames.len()];
                for (depth, members) in by_depth {
                    if depth > stack.len() {
                        return Err(Error::Format(format!("{depth} layers received for a {}-layer stack", stack.len())));
                    }
                    let layers = (0..depth)
                        .map(|l| {
                            let table = stack.layers[l].table()?;
                            members.iter().map(|&i| decode_table(table, &frames[i][l], n_prime)).collect::<Result<Vec<_>>>()
                        })
                        .collect::<Result<Vec<_>>>()?;
                    for (k, &i) in members.iter().enumerate() {
                        let per_frame: Vec<Vec<Vec<i64>>> = layers.iter().map(|l| vec![l[k].clone()]).collect();
                        out[i] = stack.decode(&per_frame)?.pop().unwrap_or_default();
                    }
                }
                Ok(out)
            }
        }
    }

    /// Fixed-rate bits per index, when the scheme has a fixed-rate form.
    fn fixed_bits_per_element(&self) -> Option<f64> {
        match self {
            Codec::Scalar(cb) => Some(cb.q_bits as f64),
            Codec::Vector { codebook, .. } => Some(codebook.index_bits() as f64 / codebook.block_dim as f64),
            _ => None,
        }
    }
}

fn batched<T: Clone>(items: &[T], mut f: impl FnMut(&[T]) -> Result<Vec<Vec<f64>>>) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(items.len());
    for c in items.chunks(32) {
        out.extend(f(c)?);
    }
    Ok(out)
}

/// Decodes a flat stream to time-domain frames.
pub fn decode_stream(codec: &Codec, pipeline: &Pipeline, streams: Vec<Bitstream>) -> Result<Vec<Vec<Complex64>>> {
    let frames = codec.group(streams)?;
    let n_prime = pipeline.n_prime()?;
    let rec = codec.decode(&frames, n_prime)?;
    frames.iter().zip(rec).map(|(f, s)| pipeline.to_time(&s, &f[0].t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub frames: usize,
    pub evm: Evm,
    pub evm_p5_db: f64,
    pub evm_p50_db: f64,
    pub evm_p95_db: f64,
    /// Mean payload bits per real element (`b_t` excluded).
    pub bits_per_element: f64,
    /// Mean compression ratio including `b_t`.
    pub cr: f64,
    /// Mean code length over the fixed-rate length, for classical schemes.
    pub alpha: Option<f64>,
    pub payload_bits: usize,
}

/// Encodes `set` in batches and serializes every bitstream.
pub fn encode_records(codec: &Codec, set: &PreparedSet, batch: usize) -> Result<Vec<Vec<u8>>> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::new();
    for c in idx.chunks(batch.max(1)) {
        for group in codec.encode(set, c)? {
            for s in group {
                out.push(s.to_bytes()?);
            }
        }
    }
    Ok(out)
}

/// Parses serialized bitstreams and decodes them to time-domain frames.
pub fn decode_records(codec: &Codec, pipeline: &Pipeline, records: &[Vec<u8>]) -> Result<Vec<Vec<Complex64>>> {
    let streams = records.iter().map(|b| Bitstream::from_bytes(b)).collect::<Result<Vec<_>>>()?;
    decode_stream(codec, pipeline, streams)
}

/// Measures decoded frames against `set` given the records they came
/// from.
pub fn measure(codec: &Codec, pipeline: &Pipeline, set: &PreparedSet, records: &[Vec<u8>], decoded: &[Vec<Complex64>]) -> Result<Evaluation> {
    if decoded.len() != set.len() {
        return Err(Error::CorruptStream(format!("{} frames decoded from {}", decoded.len(), set.len())));
    }
    let mut payload_bits = 0usize;
    let mut n_t = 0usize;
    for r in records {
        let s = Bitstream::from_bytes(r)?;
        n_t = s.header.n_t as usize;
        payload_bits += s.payload.bit_len;
    }
    let mut acc = EvmAccumulator::default();
    for (f, d) in set.frames.iter().zip(decoded) {
        acc.add_occupied(&deinterleave(&f.target), &pipeline.decoded_spectrum(d)?)?;
    }
    let n_prime = pipeline.n_prime()?;
    let per_frame = payload_bits as f64 / set.len().max(1) as f64;
    let bits_per_element = per_frame / (2 * n_prime) as f64;
    let pct = |p| acc.percentile_db(p).unwrap_or(f64::NAN);
    Ok(Evaluation {
        frames: set.len(),
        evm: acc.finish()?,
        evm_p5_db: pct(5.0),
        evm_p50_db: pct(50.0),
        evm_p95_db: pct(95.0),
        bits_per_element,
        cr: compression_ratio(per_frame, n_prime, n_t, pipeline.scaling.q_s, pipeline.resampler.k, pipeline.resampler.m),
        alpha: codec.fixed_bits_per_element().map(|b| bits_per_element / b),
        payload_bits,
    })
}

/// Encodes, serializes, parses and decodes `set`, then measures the
/// decoded frames. The CLI's encode and decode commands run the same steps
/// with files in between.
pub fn evaluate(codec: &Codec, pipeline: &Pipeline, set: &PreparedSet, batch: usize) -> Result<Evaluation> {
    let records = encode_records(codec, set, batch)?;
    let decoded = decode_records(codec, pipeline, &records)?;
    measure(codec, pipeline, set, &records, &decoded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::train_scalar;
    use crate::latent::tests::small_set;
    use crate::latent::{accumulate, reconstruction_loss, AutoencoderShape};

    fn pipeline(set: &PreparedSet) -> Pipeline {
        Pipeline {
            frame: set.frame.clone(),
            resampler: set.resampler.clone(),
            scaling: set.scaling,
        }
    }

    fn scalar(set: &PreparedSet, q: u32) -> Codec {
        let samples: Vec<f64> = set.frames.iter().flat_map(|f| f.s.clone()).collect();
        Codec::Scalar(train_scalar(&samples, q, 50, 1e-9).unwrap().0)
    }

    #[test]
    fn scalar_bits_follow_the_accounting() {
        let set = small_set(Scenario::Downlink, 3);
        let p = pipeline(&set);
        let codec = scalar(&set, 4);
        let ev = evaluate(&codec, &p, &set, 8).unwrap();
        let n = set.n_prime();
        assert_eq!(ev.payload_bits, 3 * 2 * 4 * n);
        assert_eq!(ev.bits_per_element, 4.0);
        assert_eq!(ev.alpha, Some(1.0));
        let n_t = set.frames[0].t.len();
        assert_eq!(ev.cr, compression_ratio((2 * 4 * n) as f64, n, n_t, 8, p.resampler.k, p.resampler.m));
    }

    #[test]
    fn downlink_decode_appends_prefix_and_uplink_keeps_length() {
        for scenario in [Scenario::Downlink, Scenario::Uplink] {
            let set = small_set(scenario, 2);
            let p = pipeline(&set);
            let codec = scalar(&set, 5);
            let streams = codec.encode(&set, &[0, 1]).unwrap().into_iter().flatten().collect();
            let out = decode_stream(&codec, &p, streams).unwrap();
            let expect = match scenario {
                Scenario::Downlink => p.frame.n_fft + p.frame.n_cp,
                Scenario::Uplink => p.frame.frame_len(),
            };
            assert!(out.iter().all(|f| f.len() == expect));
        }
    }

    #[test]
    fn evaluation_matches_training_metric() {
        let set = small_set(Scenario::Downlink, 3);
        let p = pipeline(&set);
        let mut m = NeuralModel::new(AutoencoderShape::new(2, 2, 3, 1).with_latent_map(16.0, 0.0), 100.0, false, 2);
        m.build_table(&set, 4).unwrap();
        let idx = [0, 1, 2];
        let rec = m.decode_symbols(&m.encode_symbols(&set, &idx).unwrap(), None).unwrap();
        let direct = accumulate(&reconstruction_loss(&set, &idx, &rec, None).0).finish().unwrap();
        let ev = evaluate(&Codec::Neural(m), &p, &set, 2).unwrap();
        assert!((ev.evm.db - direct.db).abs() < 1e-9, "{} vs {}", ev.evm.db, direct.db);
        assert!(ev.alpha.is_none());
    }

    #[test]
    fn wrong_scheme_and_version_are_rejected() {
        let set = small_set(Scenario::Uplink, 1);
        let p = pipeline(&set);
        let codec = scalar(&set, 4);
        let mut s = codec.encode(&set, &[0]).unwrap().remove(0);
        s[0].header.scheme = SchemeId::LatentVq;
        assert!(decode_stream(&codec, &p, s).is_err());
    }

    #[test]
    fn refinement_grouping_keeps_intact_prefix() {
        let set = small_set(Scenario::Downlink, 2);
        let mut base = NeuralModel::new(AutoencoderShape::new(2, 2, 3, 1).with_latent_map(8.0, 0.0), 100.0, false, 2);
        base.build_table(&set, 2).unwrap();
        let mut stack = RefinementStack::new(base).unwrap();
        let mut l2 = NeuralModel::new(AutoencoderShape::new(4, 2, 3, 1).with_latent_map(8.0, 0.0), 1e3, true, 3);
        let mut tr = set.clone();
        tr.set_prev(stack.reconstruct(&set, 2).unwrap());
        l2.build_table(&tr, 2).unwrap();
        stack.layers.push(l2.clone());
        let mut l3 = l2.clone();
        l3.ae.params.data.iter_mut().for_each(|v| *v *= 0.5);
        stack.layers.push(l3);
        let codec = Codec::Refinement { stack, layers: 3 };
        let groups = codec.encode(&set, &[0, 1]).unwrap();
        // Frame 0 loses its middle layer; frame 1 arrives whole.
        let mut flat = vec![groups[0][0].clone(), groups[0][2].clone()];
        flat.extend(groups[1].clone());
        let frames = codec.group(flat).unwrap();
        assert_eq!(frames.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 3]);
        let rec = codec.decode(&frames, set.n_prime()).unwrap();
        let Codec::Refinement { stack, .. } = &codec else { unreachable!() };
        let (_, recs) = stack.encode(&set, &[0, 1], 3).unwrap();
        assert_eq!(rec[0], recs[0][0]);
        assert_eq!(rec[1], recs[2][1]);
    }
}
