//! Generalized-Lloyd vector quantizer over real-interleaved I/Q blocks,
//! optionally followed by a canonical Huffman code on the indices.

use log::{info, warn};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::huffman::CanonicalCode;
use super::scalar::LloydTrace;
use super::{deinterleave, interleave};
use crate::bits::{BitWriter, Payload};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorCodebook {
    /// Row-major `2^{bQ} × b`.
    pub vectors: Vec<f64>,
    pub block_dim: usize,
    pub q_bits: u32,
    pub code_lengths: Option<Vec<u8>>,
    /// Mean Huffman length over `b·Q`, measured on the training blocks.
    pub alpha: f64,
}

impl VectorCodebook {
    pub fn rows(&self) -> usize {
        self.vectors.len() / self.block_dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.block_dim..(i + 1) * self.block_dim]
    }

    pub fn index_bits(&self) -> u32 {
        self.block_dim as u32 * self.q_bits
    }

    /// Nearest row by Euclidean distance, lowest index on ties.
    pub fn nearest(&self, block: &[f64]) -> usize {
        nearest_row(&self.vectors, self.block_dim, block).0
    }

    pub fn huffman(&self) -> Result<Option<CanonicalCode>> {
        self.code_lengths
            .as_ref()
            .map(|l| CanonicalCode::from_lengths(l.clone()))
            .transpose()
    }
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn nearest_row(vectors: &[f64], b: usize, block: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, row) in vectors.chunks_exact(b).enumerate() {
        let d = dist2(row, block);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, later ones with probability
/// proportional to squared distance from the nearest chosen centre.
pub fn kmeans_pp<R: Rng>(data: &[f64], b: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = data.len() / b;
    let mut centres = Vec::with_capacity(k * b);
    let first = rng.gen_range(0..n);
    centres.extend_from_slice(&data[first * b..(first + 1) * b]);
    let mut d2: Vec<f64> = data.chunks_exact(b).map(|p| dist2(p, &centres[..b])).collect();
    while centres.len() < k * b {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        let c = data[pick * b..(pick + 1) * b].to_vec();
        for (p, d) in data.chunks_exact(b).zip(d2.iter_mut()) {
            *d = d.min(dist2(p, &c));
        }
        centres.extend_from_slice(&c);
    }
    centres
}

/// Lloyd iterations on `centres` in place. Returns the per-iteration mean
/// squared error per block and the number of re-seeded empty cells.
pub fn lloyd<R: Rng>(data: &[f64], b: usize, centres: &mut [f64], max_iter: usize, tol: f64, rng: &mut R) -> LloydTrace {
    let k = centres.len() / b;
    let n = data.len() / b;
    let mut trace = LloydTrace::default();
    let mut assign = vec![0usize; n];
    let mut prev = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        let mut err = 0.0;
        for (i, p) in data.chunks_exact(b).enumerate() {
            let (j, d) = nearest_row(centres, b, p);
            assign[i] = j;
            err += d;
        }
        let mse = err / n as f64;
        trace.distortions.push(mse);
        if prev.is_finite() && (prev - mse).abs() <= tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = mse;

        let mut sums = vec![0.0; k * b];
        let mut counts = vec![0usize; k];
        for (i, p) in data.chunks_exact(b).enumerate() {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i] * b..(assign[i] + 1) * b].iter_mut().zip(p) {
                *s += v;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                for d in 0..b {
                    centres[j * b + d] = sums[j * b + d] / counts[j] as f64;
                }
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                // Split the most populated cell: place the dead centre on a
                // random member of that cell.
                let big = (0..k).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap();
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == big).collect();
                let pick = members[rng.gen_range(0..members.len())];
                centres[j * b..(j + 1) * b].copy_from_slice(&data[pick * b..(pick + 1) * b]);
                counts[big] -= 1;
                counts[j] = 1;
                assign[pick] = j;
                trace.reseeds += 1;
                warn!("vector Lloyd: re-seeded empty cell {j} from cell {big}");
            }
        }
    }
    trace
}

/// Trains a `2^{bQ}`-row codebook on blocks of `b` reals (row-major) and
/// fits a Huffman code to the resulting index frequencies.
pub fn train_vector<R: Rng>(
    blocks: &[f64],
    b: usize,
    q_bits: u32,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Result<(VectorCodebook, LloydTrace)> {
    if b == 0 || blocks.len() % b != 0 {
        return Err(Error::InputShape(format!("{} values do not form blocks of {b}", blocks.len())));
    }
    let bits = b as u32 * q_bits;
    if bits == 0 || bits > 20 {
        return Err(Error::Config(format!("b·Q = {bits} outside [1, 20]")));
    }
    let k = 1usize << bits;
    let n = blocks.len() / b;
    if n < k {
        return Err(Error::Statistics(format!("{n} blocks cannot train {k} codewords")));
    }
    let mut centres = kmeans_pp(blocks, b, k, rng);
    let trace = lloyd(blocks, b, &mut centres, max_iter, tol, rng);
    info!(
        "vector Lloyd: {} iterations, final MSE {:.3e}, {} reseeds",
        trace.distortions.len(),
        trace.distortions.last().copied().unwrap_or(f64::NAN),
        trace.reseeds
    );
    let mut freqs = vec![0u64; k];
    for p in blocks.chunks_exact(b) {
        freqs[nearest_row(&centres, b, p).0] += 1;
    }
    let code = CanonicalCode::from_frequencies(&freqs)?;
    let alpha = code.mean_length(&freqs) / bits as f64;
    Ok((
        VectorCodebook {
            vectors: centres,
            block_dim: b,
            q_bits,
            code_lengths: Some(code.lengths().to_vec()),
            alpha,
        },
        trace,
    ))
}

pub fn apply_vector(s: &[Complex64], cb: &VectorCodebook, entropy_coded: bool) -> Result<(Vec<Complex64>, Payload)> {
    let flat = interleave(s);
    if flat.len() % cb.block_dim != 0 {
        return Err(Error::InputShape(format!(
            "2·{} reals do not split into blocks of {}",
            s.len(),
            cb.block_dim
        )));
    }
    let code = if entropy_coded {
        Some(cb.huffman()?.ok_or_else(|| Error::Model("codebook has no Huffman table".into()))?)
    } else {
        None
    };
    let mut w = BitWriter::new();
    let mut out = Vec::with_capacity(flat.len());
    for block in flat.chunks_exact(cb.block_dim) {
        let i = cb.nearest(block);
        match &code {
            Some(c) => c.encode(&mut w, i),
            None => w.write(i as u64, cb.index_bits()),
        }
        out.extend_from_slice(cb.row(i));
    }
    Ok((deinterleave(&out), w.into_payload()))
}

pub fn decode_vector(payload: &Payload, n: usize, cb: &VectorCodebook, entropy_coded: bool) -> Result<Vec<Complex64>> {
    if (2 * n) % cb.block_dim != 0 {
        return Err(Error::InputShape("frame does not split into whole blocks".into()));
    }
    let code = if entropy_coded {
        Some(cb.huffman()?.ok_or_else(|| Error::Model("codebook has no Huffman table".into()))?)
    } else {
        None
    };
    let mut r = payload.reader();
    let mut out = Vec::with_capacity(2 * n);
    for _ in 0..2 * n / cb.block_dim {
        let i = match &code {
            Some(c) => c.decode(&mut r)?,
            None => r.read(cb.index_bits())? as usize,
        };
        if i >= cb.rows() {
            return Err(Error::CorruptStream(format!("codeword index {i} out of range")));
        }
        out.extend_from_slice(cb.row(i));
    }
    // A framed payload may carry up to 7 bits of byte padding.
    if r.position() > payload.bit_len || payload.bit_len - r.position() >= 8 {
        return Err(Error::CorruptStream(format!(
            "decoded {} of {} payload bits",
            r.position(),
            payload.bit_len
        )));
    }
    Ok(deinterleave(&out))
}
