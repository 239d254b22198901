//! Fronthaul (CPRI) IQ compression: signal generation, rational-rate
//! resampling, block scaling, classical quantizers, recurrent-network
//! compression with learned entropy coding, and an experiment harness.

pub mod advanced;
pub mod bits;
pub mod bitstream;
pub mod bundle;
pub mod classical;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod latent;
pub mod linalg;
pub mod multirate;
pub mod nn;
pub mod rng;
pub mod scaling;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
