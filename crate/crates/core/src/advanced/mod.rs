//! Layered and multi-rate operation on top of the learned entropy codec.

pub mod refinement;
pub mod variable_rate;

pub use refinement::RefinementStack;
pub use variable_rate::{RateLevel, VariableRateSet};

/// Trade-off per refinement layer.
pub const REFINEMENT_LAMBDAS: [f64; 3] = [1e2, 1e3, 1e4];
/// Latent scale factors, increasing, ending at 1.
pub const RATE_SCALES: [f64; 5] = [0.1, 0.25, 0.5, 0.9, 1.0];
