//! Canonical Huffman code over a dense alphabet `0..n`.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::bits::{BitReader, BitWriter};
use crate::error::{Error, Result};

/// Longest codeword the encoder will emit.
pub const MAX_CODE_LEN: u8 = 48;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalCode {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    /// Per length L: (first code of length L, index into `order` of that code).
    first: Vec<(u64, usize)>,
    /// Symbols sorted by (length, symbol).
    order: Vec<u32>,
    /// Number of codes of each length.
    counts: Vec<usize>,
}

/// Huffman code lengths for the given symbol weights. Zero weights are
/// treated as 1 so every symbol stays encodable.
pub fn code_lengths(freqs: &[u64]) -> Vec<u8> {
    let n = freqs.len();
    match n {
        0 => return Vec::new(),
        1 => return vec![1],
        _ => {}
    }
    // Nodes: leaves 0..n, internal n.. ; ties broken by node id for
    // determinism.
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> =
        freqs.iter().enumerate().map(|(i, &f)| Reverse((f.max(1), i))).collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, next)));
        next += 1;
    }
    let root = next - 1;
    let mut depth = vec![0u8; 2 * n - 1];
    for node in (0..root).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    depth.truncate(n);
    depth
}

impl CanonicalCode {
    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Model("empty Huffman alphabet".into()));
        }
        if lengths.iter().any(|&l| l == 0 || l > MAX_CODE_LEN) {
            return Err(Error::Model(format!("code lengths must lie in 1..={MAX_CODE_LEN}")));
        }
        let kraft: f64 = lengths.iter().map(|&l| (-(l as f64)).exp2()).sum();
        if kraft > 1.0 + 1e-12 {
            return Err(Error::Model(format!("code lengths violate Kraft (sum {kraft})")));
        }
        let max_len = *lengths.iter().max().unwrap() as usize;
        let mut order: Vec<u32> = (0..lengths.len() as u32).collect();
        order.sort_by_key(|&s| (lengths[s as usize], s));
        let mut counts = vec![0usize; max_len + 1];
        for &l in &lengths {
            counts[l as usize] += 1;
        }
        let mut codes = vec![0u64; lengths.len()];
        let mut first = vec![(0u64, 0usize); max_len + 1];
        let mut code = 0u64;
        let mut pos = 0usize;
        for len in 1..=max_len {
            code <<= 1;
            first[len] = (code, pos);
            for &s in &order[pos..pos + counts[len]] {
                codes[s as usize] = code;
                code += 1;
            }
            pos += counts[len];
        }
        Ok(Self {
            lengths,
            codes,
            first,
            order,
            counts,
        })
    }

    pub fn from_frequencies(freqs: &[u64]) -> Result<Self> {
        Self::from_lengths(code_lengths(freqs))
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    pub fn len(&self, symbol: usize) -> u8 {
        self.lengths[symbol]
    }

    pub fn encode(&self, w: &mut BitWriter, symbol: usize) {
        w.write(self.codes[symbol], self.lengths[symbol] as u32);
    }

    pub fn decode(&self, r: &mut BitReader<'_>) -> Result<usize> {
        let mut code = 0u64;
        for len in 1..self.first.len() {
            code = (code << 1) | r.read_bit()? as u64;
            let (fc, pos) = self.first[len];
            if code >= fc && code - fc < self.counts[len] as u64 {
                return Ok(self.order[pos + (code - fc) as usize] as usize);
            }
        }
        Err(Error::CorruptStream("bit pattern is not a Huffman codeword".into()))
    }

    /// Mean code length under the given symbol counts.
    pub fn mean_length(&self, freqs: &[u64]) -> f64 {
        let total: u64 = freqs.iter().sum();
        let bits: u64 = freqs.iter().zip(&self.lengths).map(|(&f, &l)| f * l as u64).sum();
        bits as f64 / total.max(1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn textbook_lengths() {
        // a:45 b:13 c:12 d:16 e:9 f:5 → 1,3,3,3,4,4
        let l = code_lengths(&[45, 13, 12, 16, 9, 5]);
        assert_eq!(l, vec![1, 3, 3, 3, 4, 4]);
        let code = CanonicalCode::from_lengths(l).unwrap();
        assert_eq!(code.codes, vec![0b0, 0b100, 0b101, 0b110, 0b1110, 0b1111]);
    }

    #[test]
    fn uniform_alphabet_is_flat() {
        let l = code_lengths(&[7; 256]);
        assert!(l.iter().all(|&x| x == 8));
    }

    #[test]
    fn kraft_violation_rejected() {
        assert!(CanonicalCode::from_lengths(vec![1, 1, 1]).is_err());
    }

    #[test]
    fn invalid_prefix_detected() {
        // Lengths {1, 2} leave the code 11 unassigned.
        let code = CanonicalCode::from_lengths(vec![1, 2]).unwrap();
        let bytes = [0b1100_0000];
        let mut r = BitReader::new(&bytes);
        assert!(matches!(code.decode(&mut r), Err(Error::CorruptStream(_))));
    }

    proptest! {
        #[test]
        fn round_trip_and_entropy_bound(
            freqs in proptest::collection::vec(0u64..1000, 2..40),
            seed in 0u64..1000,
        ) {
            let code = CanonicalCode::from_frequencies(&freqs).unwrap();
            let kraft: f64 = code.lengths().iter().map(|&l| (-(l as f64)).exp2()).sum();
            prop_assert!(kraft <= 1.0 + 1e-12);
            let n = freqs.len();
            let msg: Vec<usize> = (0..200).map(|i| ((i as u64 * 2654435761 + seed) % n as u64) as usize).collect();
            let mut w = BitWriter::new();
            for &s in &msg {
                code.encode(&mut w, s);
            }
            let bytes = w.into_bytes();
            let mut r = BitReader::new(&bytes);
            for &s in &msg {
                prop_assert_eq!(code.decode(&mut r).unwrap(), s);
            }
            // Average length within one bit of the entropy of the weights.
            let w1: Vec<u64> = freqs.iter().map(|&f| f.max(1)).collect();
            let total: u64 = w1.iter().sum();
            let h: f64 = w1.iter().map(|&f| { let p = f as f64 / total as f64; -p * p.log2() }).sum();
            let mean = code.mean_length(&w1);
            prop_assert!(mean >= h - 1e-9 && mean < h + 1.0);
        }
    }
}
