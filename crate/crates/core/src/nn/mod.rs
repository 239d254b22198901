//! Minimal differentiable substrate: dense layers, bidirectional gated
//! recurrence with hand-written reverse passes, and Adam.

pub mod adam;
pub mod dense;
pub mod gru;
pub mod params;
pub mod seq;

use rand::Rng;

pub use adam::{Adam, Plateau};
pub use dense::Dense;
pub use gru::{BiGru, GruDir, GruStack};
pub use params::{ParamSet, ParamSpec};
pub use seq::Seq;

use crate::error::Result;

/// Recurrent stack followed by a per-step dense head: the shape shared by
/// every encoder and decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Transform {
    pub stack: GruStack,
    pub head: Dense,
}

#[derive(Debug, Clone)]
pub struct TransformCache {
    stack: gru::GruStackCache,
}

impl Transform {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, depth: usize, output: usize) -> Self {
        let stack = GruStack::register(params, &format!("{prefix}.gru"), input, hidden, depth);
        let head = Dense::register(params, &format!("{prefix}.head"), 2 * hidden, output);
        Self { stack, head }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        self.stack.init(params, rng);
        self.head.init(params, rng);
    }

    pub fn input_dim(&self) -> usize {
        self.stack.layers[0].fwd.input
    }

    pub fn output_dim(&self) -> usize {
        self.head.output
    }

    pub fn forward(&self, p: &[f64], x: &Seq) -> Result<(Seq, TransformCache)> {
        let stack = self.stack.forward(p, x)?;
        let y = self.head.forward(p, stack.output());
        Ok((y, TransformCache { stack }))
    }

    /// Recomputes the head output of a cached forward pass.
    pub fn output_of(&self, p: &[f64], cache: &TransformCache) -> Seq {
        self.head.forward(p, cache.stack.output())
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Seq, cache: &TransformCache, dy: &Seq) -> Seq {
        let dh = self.head.backward(p, g, cache.stack.output(), dy);
        self.stack.backward(p, g, x, &cache.stack, &dh)
    }
}

pub mod gradcheck {
    //! Central-difference probes shared by the gradient tests.

    /// Largest relative error between analytic and numeric derivatives over
    /// the probed coordinates, using the fourth-order central stencil.
    /// Derivatives below 1e-6 in magnitude are compared absolutely, since the
    /// stencil's rounding noise on an O(1) loss is about 1e-12.
    /// `f` must be a pure function of `x`.
    pub fn max_rel_error(x: &mut [f64], analytic: &[f64], probes: &[usize], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        let mut worst = 0.0f64;
        for &i in probes {
            let x0 = x[i];
            let mut at = |d: f64| {
                x[i] = x0 + d;
                f(x)
            };
            let (p1, m1, p2, m2) = (at(eps), at(-eps), at(2.0 * eps), at(-2.0 * eps));
            x[i] = x0;
            let num = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let denom = num.abs().max(analytic[i].abs()).max(1e-6);
            if std::env::var_os("GRADCHECK_TRACE").is_some() {
                eprintln!("probe {i}: numeric {num:e} analytic {:e}", analytic[i]);
            }
            worst = worst.max((num - analytic[i]).abs() / denom);
        }
        worst
    }

    pub fn probes(len: usize, count: usize, seed: u64) -> Vec<usize> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| rng.gen_range(0..len)).collect()
    }
}
