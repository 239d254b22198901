//! Gated recurrent layers, batched over time-major sequences.
//!
//! Gate equations (reset applied to the recurrent candidate term):
//!
//! ```text
//! r = σ(W_r x + U_r h₋ + b_r)
//! u = σ(W_u x + U_u h₋ + b_u)
//! n = tanh(W_n x + r ⊙ (U_n h₋) + b_n)
//! h = u ⊙ h₋ + (1 − u) ⊙ n
//! ```
//!
//! `W` is stored `3H × in` and `U` as `3H × H`, rows ordered (r, u, n).

use std::ops::Range;

use rand::Rng;

use super::params::ParamSet;
use super::seq::Seq;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Op};

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One direction of one recurrent layer.
#[derive(Debug, Clone, PartialEq)]
pub struct GruDir {
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    pub w: Range<usize>,
    pub u: Range<usize>,
    pub b: Range<usize>,
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruDirCache {
    r: Vec<f64>,
    u: Vec<f64>,
    n: Vec<f64>,
    /// `U_n h₋` before the reset gate is applied.
    hun: Vec<f64>,
    h: Seq,
}

impl GruDir {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, reverse: bool) -> Self {
        let w = params.add(format!("{prefix}.w"), &[3 * hidden, input]);
        let u = params.add(format!("{prefix}.u"), &[3 * hidden, hidden]);
        let b = params.add(format!("{prefix}.b"), &[3 * hidden]);
        Self {
            input,
            hidden,
            reverse,
            w,
            u,
            b,
        }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        params.fill_uniform(self.w.clone(), 1.0 / (self.input as f64).sqrt(), rng);
        params.fill_uniform(self.u.clone(), 1.0 / (self.hidden as f64).sqrt(), rng);
    }

    /// Time index visited at sweep position `s`.
    fn time(&self, s: usize, steps: usize) -> usize {
        if self.reverse {
            steps - 1 - s
        } else {
            s
        }
    }

    pub fn forward(&self, p: &[f64], x: &Seq) -> Result<GruDirCache> {
        assert_eq!(x.features, self.input, "GRU input width");
        let (steps, batch, h) = (x.steps, x.batch, self.hidden);
        let rows = x.rows();
        // Input contributions for all steps at once, bias included.
        let mut xw = vec![0.0; rows * 3 * h];
        for row in xw.chunks_exact_mut(3 * h) {
            row.copy_from_slice(&p[self.b.clone()]);
        }
        gemm(rows, self.input, 3 * h, 1.0, &x.data, Op::N, &p[self.w.clone()], Op::T, 1.0, &mut xw);

        let mut cache = GruDirCache {
            r: vec![0.0; rows * h],
            u: vec![0.0; rows * h],
            n: vec![0.0; rows * h],
            hun: vec![0.0; rows * h],
            h: Seq::zeros(steps, batch, h),
        };
        let zeros = vec![0.0; batch * h];
        let mut hu = vec![0.0; batch * 3 * h];
        for s in 0..steps {
            let t = self.time(s, steps);
            let prev: Vec<f64> = if s == 0 {
                zeros.clone()
            } else {
                cache.h.step(self.time(s - 1, steps)).to_vec()
            };
            gemm(batch, h, 3 * h, 1.0, &prev, Op::N, &p[self.u.clone()], Op::T, 0.0, &mut hu);
            let base = t * batch * h;
            let mut finite = true;
            for bi in 0..batch {
                let xr = &xw[(t * batch + bi) * 3 * h..(t * batch + bi + 1) * 3 * h];
                let hr = &hu[bi * 3 * h..(bi + 1) * 3 * h];
                for j in 0..h {
                    let k = base + bi * h + j;
                    let r = sigmoid(xr[j] + hr[j]);
                    let u = sigmoid(xr[h + j] + hr[h + j]);
                    let hun = hr[2 * h + j];
                    let n = (xr[2 * h + j] + r * hun).tanh();
                    let hp = prev[bi * h + j];
                    let hv = u * hp + (1.0 - u) * n;
                    finite &= hv.is_finite();
                    cache.r[k] = r;
                    cache.u[k] = u;
                    cache.n[k] = n;
                    cache.hun[k] = hun;
                    cache.h.data[k] = hv;
                }
            }
            if !finite {
                return Err(Error::NumericalFailure {
                    step: t,
                    what: "non-finite recurrent state".into(),
                });
            }
        }
        Ok(cache)
    }

    /// Accumulates parameter gradients into `g`; returns `∂L/∂x`.
    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Seq, cache: &GruDirCache, dh_out: &Seq) -> Seq {
        let (steps, batch, h) = (x.steps, x.batch, self.hidden);
        let rows = x.rows();
        let mut dxw = vec![0.0; rows * 3 * h];
        let mut dhu = vec![0.0; rows * 3 * h];
        let mut hprev = vec![0.0; rows * h];
        let mut dh_next = vec![0.0; batch * h];
        for s in (0..steps).rev() {
            let t = self.time(s, steps);
            let tp = (s > 0).then(|| self.time(s - 1, steps));
            let base = t * batch * h;
            let mut carry = vec![0.0; batch * h];
            for bi in 0..batch {
                for j in 0..h {
                    let k = base + bi * h + j;
                    let hp = tp.map_or(0.0, |tp| cache.h.data[tp * batch * h + bi * h + j]);
                    hprev[k] = hp;
                    let dh = dh_out.data[k] + dh_next[bi * h + j];
                    let (r, u, n) = (cache.r[k], cache.u[k], cache.n[k]);
                    let dn_pre = dh * (1.0 - u) * (1.0 - n * n);
                    let du_pre = dh * (hp - n) * u * (1.0 - u);
                    let dr_pre = dn_pre * cache.hun[k] * r * (1.0 - r);
                    let o = (t * batch + bi) * 3 * h;
                    dxw[o + j] = dr_pre;
                    dxw[o + h + j] = du_pre;
                    dxw[o + 2 * h + j] = dn_pre;
                    dhu[o + j] = dr_pre;
                    dhu[o + h + j] = du_pre;
                    dhu[o + 2 * h + j] = dn_pre * r;
                    carry[bi * h + j] = dh * u;
                }
            }
            let o = t * batch * 3 * h;
            gemm(batch, 3 * h, h, 1.0, &dhu[o..o + batch * 3 * h], Op::N, &p[self.u.clone()], Op::N, 1.0, &mut carry);
            dh_next = carry;
        }
        gemm(3 * h, rows, h, 1.0, &dhu, Op::T, &hprev, Op::N, 1.0, &mut g[self.u.clone()]);
        gemm(3 * h, rows, self.input, 1.0, &dxw, Op::T, &x.data, Op::N, 1.0, &mut g[self.w.clone()]);
        let gb = &mut g[self.b.clone()];
        for row in dxw.chunks_exact(3 * h) {
            for (a, v) in gb.iter_mut().zip(row) {
                *a += v;
            }
        }
        let mut dx = Seq::zeros(steps, batch, self.input);
        gemm(rows, 3 * h, self.input, 1.0, &dxw, Op::N, &p[self.w.clone()], Op::N, 0.0, &mut dx.data);
        dx
    }
}

impl GruDirCache {
    pub fn output(&self) -> &Seq {
        &self.h
    }
}

/// Forward and time-reversed directions, outputs concatenated per step.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru {
    pub fwd: GruDir,
    pub bwd: GruDir,
}

#[derive(Debug, Clone)]
pub struct BiGruCache {
    fwd: GruDirCache,
    bwd: GruDirCache,
    out: Seq,
}

impl BiGruCache {
    pub fn output(&self) -> &Seq {
        &self.out
    }
}

impl BiGru {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize) -> Self {
        Self {
            fwd: GruDir::register(params, &format!("{prefix}.fwd"), input, hidden, false),
            bwd: GruDir::register(params, &format!("{prefix}.bwd"), input, hidden, true),
        }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        self.fwd.init(params, rng);
        self.bwd.init(params, rng);
    }

    pub fn forward(&self, p: &[f64], x: &Seq) -> Result<BiGruCache> {
        let fwd = self.fwd.forward(p, x)?;
        let bwd = self.bwd.forward(p, x)?;
        let out = Seq::concat(&fwd.h, &bwd.h);
        Ok(BiGruCache { fwd, bwd, out })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Seq, cache: &BiGruCache, dout: &Seq) -> Seq {
        let (df, db) = dout.split(self.fwd.hidden);
        let mut dx = self.fwd.backward(p, g, x, &cache.fwd, &df);
        let dxb = self.bwd.backward(p, g, x, &cache.bwd, &db);
        for (a, b) in dx.data.iter_mut().zip(&dxb.data) {
            *a += b;
        }
        dx
    }
}

/// Stack of bidirectional layers; layer `i > 0` reads the `2H` outputs of
/// layer `i − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStack {
    pub layers: Vec<BiGru>,
}

#[derive(Debug, Clone)]
pub struct GruStackCache {
    layers: Vec<BiGruCache>,
}

impl GruStackCache {
    pub fn output(&self) -> &Seq {
        self.layers.last().expect("empty stack").output()
    }
}

impl GruStack {
    pub fn register(params: &mut ParamSet, prefix: &str, input: usize, hidden: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|i| {
                let inp = if i == 0 { input } else { 2 * hidden };
                BiGru::register(params, &format!("{prefix}.l{i}"), inp, hidden)
            })
            .collect();
        Self { layers }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        for l in &self.layers {
            l.init(params, rng);
        }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0].fwd.hidden
    }

    pub fn forward(&self, p: &[f64], x: &Seq) -> Result<GruStackCache> {
        let mut caches: Vec<BiGruCache> = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let input = caches.last().map_or(x, |c| c.output());
            let c = l.forward(p, input)?;
            caches.push(c);
        }
        Ok(GruStackCache { layers: caches })
    }

    pub fn backward(&self, p: &[f64], g: &mut [f64], x: &Seq, cache: &GruStackCache, dout: &Seq) -> Seq {
        let mut d = dout.clone();
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { cache.layers[i - 1].output() };
            d = self.layers[i].backward(p, g, input, &cache.layers[i], &d);
        }
        d
    }
}
