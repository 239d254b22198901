use std::ops::Range;

use rand::Rng;

use super::params::ParamSet;
use super::seq::Seq;
use crate::linalg::{gemm, Op};

/// Per-step affine map `y = W x + b`, `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub input: usize,
    pub output: usize,
    pub w: Range<usize>,
    pub b: Range<usize>,
}

impl Dense {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, output: usize) -> Self {
        let w = params.add(format!("{prefix}.weight"), &[output, input]);
        let b = params.add(format!("{prefix}.bias"), &[output]);
        Self { input, output, w, b }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        params.fill_uniform(self.w.clone(), 1.0 / (self.input as f64).sqrt(), rng);
    }

    pub fn forward(&self, p: &[f64], x: &Seq) -> Seq {
        assert_eq!(x.features, self.input);
        let mut y = Seq::zeros(x.steps, x.batch, self.output);
        let bias = &p[self.b.clone()];
        for row in y.data.chunks_exact_mut(self.output) {
            row.copy_from_slice(bias);
        }
        gemm(x.rows(), self.input, self.output, 1.0, &x.data, Op::N, &p[self.w.clone()], Op::T, 1.0, &mut y.data);
        y
    }

    /// Accumulates parameter gradients into `g` and returns `∂L/∂x`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Seq, dy: &Seq) -> Seq {
        let rows = x.rows();
        gemm(self.output, rows, self.input, 1.0, &dy.data, Op::T, &x.data, Op::N, 1.0, &mut g[self.w.clone()]);
        let gb = &mut g[self.b.clone()];
        for row in dy.data.chunks_exact(self.output) {
            for (a, v) in gb.iter_mut().zip(row) {
                *a += v;
            }
        }
        let mut dx = Seq::zeros(x.steps, x.batch, self.input);
        gemm(rows, self.output, self.input, 1.0, &dy.data, Op::N, &p[self.w.clone()], Op::N, 0.0, &mut dx.data);
        dx
    }
}
