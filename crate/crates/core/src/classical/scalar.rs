//! Lloyd-Max scalar quantizer applied independently to I and Q.

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bits::{BitWriter, Payload};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarCodebook {
    pub levels: Vec<f64>,
    pub q_bits: u32,
}

/// Per-iteration record of a Lloyd run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LloydTrace {
    /// Mean squared error after each iteration.
    pub distortions: Vec<f64>,
    pub reseeds: usize,
}

impl LloydTrace {
    /// True when no iteration increased the distortion (up to rounding).
    pub fn is_monotone(&self) -> bool {
        self.distortions
            .windows(2)
            .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300)
    }
}

impl ScalarCodebook {
    pub fn new(levels: Vec<f64>, q_bits: u32) -> Result<Self> {
        if levels.len() != 1usize << q_bits {
            return Err(Error::Config(format!(
                "{} levels for a {q_bits}-bit codebook",
                levels.len()
            )));
        }
        if levels.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("levels must be strictly increasing".into()));
        }
        Ok(Self { levels, q_bits })
    }

    /// Decision thresholds: midpoints of adjacent levels.
    fn thresholds(&self) -> Vec<f64> {
        self.levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Index of the nearest level; a value exactly between two levels maps
    /// to the lower index.
    pub fn index_of(&self, v: f64) -> usize {
        nearest_sorted(&self.levels, v)
    }

    pub fn mse(&self, samples: &[f64]) -> f64 {
        let sum: f64 = samples
            .iter()
            .map(|&v| {
                let d = v - self.levels[self.index_of(v)];
                d * d
            })
            .sum();
        sum / samples.len().max(1) as f64
    }
}

fn nearest_sorted(levels: &[f64], v: f64) -> usize {
    // Count of levels strictly below v, then compare the two neighbours.
    let hi = levels.partition_point(|&l| l < v);
    if hi == 0 {
        return 0;
    }
    if hi == levels.len() {
        return levels.len() - 1;
    }
    if v - levels[hi - 1] <= levels[hi] - v {
        hi - 1
    } else {
        hi
    }
}

/// Trains a `2^q_bits`-level quantizer by alternating nearest-level
/// partitioning and centroid updates.
pub fn train_scalar(samples: &[f64], q_bits: u32, max_iter: usize, tol: f64) -> Result<(ScalarCodebook, LloydTrace)> {
    let n_levels = 1usize << q_bits;
    if q_bits == 0 || q_bits > 16 {
        return Err(Error::Config(format!("q_bits = {q_bits} outside [1, 16]")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InputShape("non-finite training sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    if sorted.len() < n_levels {
        return Err(Error::Statistics(format!(
            "{} distinct samples cannot train {n_levels} levels",
            sorted.len()
        )));
    }
    let mut data = samples.to_vec();
    data.sort_by(f64::total_cmp);
    let n = data.len();

    // Start from mid-quantile points of the distinct values.
    let mut levels: Vec<f64> = (0..n_levels)
        .map(|j| sorted[((2 * j + 1) * sorted.len()) / (2 * n_levels)])
        .collect();

    let mut trace = LloydTrace::default();
    let mut prev = f64::INFINITY;
    for _ in 0..max_iter.max(1) {
        // Cells are contiguous runs of the sorted data; a sample on a
        // threshold belongs to the lower cell.
        let mut bounds = Vec::with_capacity(n_levels + 1);
        bounds.push(0);
        for w in levels.windows(2) {
            let thr = 0.5 * (w[0] + w[1]);
            bounds.push(data.partition_point(|&v| v <= thr));
        }
        bounds.push(n);

        let mut new_levels = levels.clone();
        let mut empty = Vec::new();
        for j in 0..n_levels {
            let cell = &data[bounds[j]..bounds[j + 1]];
            if cell.is_empty() {
                empty.push(j);
            } else {
                new_levels[j] = cell.iter().sum::<f64>() / cell.len() as f64;
            }
        }
        for j in empty {
            // Split the most populated cell: move the empty level to the
            // midpoint between that cell's centroid and its farthest sample.
            let (big, _) = (0..n_levels)
                .map(|c| (c, bounds[c + 1] - bounds[c]))
                .max_by_key(|&(c, len)| (len, std::cmp::Reverse(c)))
                .unwrap();
            let cell = &data[bounds[big]..bounds[big + 1]];
            let c = new_levels[big];
            let far = if (cell[cell.len() - 1] - c).abs() >= (c - cell[0]).abs() {
                cell[cell.len() - 1]
            } else {
                cell[0]
            };
            new_levels[j] = 0.5 * (c + far);
            trace.reseeds += 1;
            warn!("scalar Lloyd: re-seeded empty cell {j} from cell {big}");
        }
        new_levels.sort_by(f64::total_cmp);
        new_levels.dedup();
        while new_levels.len() < n_levels {
            // Degenerate collision after a reseed: nudge apart.
            let last = *new_levels.last().unwrap();
            new_levels.push(last + f64::EPSILON.max(last.abs() * 1e-12));
        }
        levels = new_levels;

        let d = ScalarCodebook {
            levels: levels.clone(),
            q_bits,
        }
        .mse(&data);
        trace.distortions.push(d);
        if prev.is_finite() && (prev - d).abs() <= tol * prev.max(f64::MIN_POSITIVE) {
            break;
        }
        prev = d;
    }
    Ok((ScalarCodebook::new(levels, q_bits)?, trace))
}

/// Quantizes I and Q independently; the payload carries one `q_bits`
/// index per component, I before Q, MSB-first.
pub fn apply_scalar(s: &[Complex64], cb: &ScalarCodebook) -> (Vec<Complex64>, Payload) {
    let thr = cb.thresholds();
    let idx = |v: f64| thr.partition_point(|&t| t < v);
    let mut w = BitWriter::new();
    let s_hat = s
        .iter()
        .map(|z| {
            let (i, q) = (idx(z.re), idx(z.im));
            w.write(i as u64, cb.q_bits);
            w.write(q as u64, cb.q_bits);
            Complex64::new(cb.levels[i], cb.levels[q])
        })
        .collect();
    (s_hat, w.into_payload())
}

pub fn decode_scalar(payload: &Payload, n: usize, cb: &ScalarCodebook) -> Result<Vec<Complex64>> {
    if payload.bit_len != 2 * cb.q_bits as usize * n {
        return Err(Error::CorruptStream(format!(
            "scalar payload has {} bits, expected {}",
            payload.bit_len,
            2 * cb.q_bits as usize * n
        )));
    }
    let mut r = payload.reader();
    (0..n)
        .map(|_| {
            let i = r.read(cb.q_bits)? as usize;
            let q = r.read(cb.q_bits)? as usize;
            Ok(Complex64::new(cb.levels[i], cb.levels[q]))
        })
        .collect()
}
