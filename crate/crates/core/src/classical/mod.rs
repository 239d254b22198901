//! Classical baselines: Lloyd-Max scalar quantization and generalized-Lloyd
//! vector quantization with Huffman-coded indices.

pub mod huffman;
pub mod scalar;
pub mod vector;

use num_complex::Complex64;

pub use huffman::CanonicalCode;
pub use scalar::{apply_scalar, decode_scalar, train_scalar, LloydTrace, ScalarCodebook};
pub use vector::{apply_vector, decode_vector, train_vector, VectorCodebook};

/// `[Re s₀, Im s₀, Re s₁, …]`.
pub fn interleave(s: &[Complex64]) -> Vec<f64> {
    s.iter().flat_map(|z| [z.re, z.im]).collect()
}

pub fn deinterleave(v: &[f64]) -> Vec<Complex64> {
    v.chunks_exact(2).map(|p| Complex64::new(p[0], p[1])).collect()
}

/// Compression ratio of a frame: transmitted bits (payload plus scaling
/// factors) relative to 30 bits per complex sample at the original rate,
/// `(payload + q_s·n_t)·k / (m · 30 · n′)`.
pub fn compression_ratio(payload_bits: f64, n_prime: usize, n_t: usize, q_s: u32, k: usize, m: usize) -> f64 {
    (payload_bits + (q_s as usize * n_t) as f64) * k as f64 / (m as f64 * 30.0 * n_prime as f64)
}
