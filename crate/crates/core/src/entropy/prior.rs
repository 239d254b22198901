//! Per-channel learned monotone CDF.
//!
//! Each channel maps a scalar through four affine stages with widths
//! 1→4→4→4→1. The first three are followed by `x + a ⊙ tanh(x)`; the last by
//! the logistic. Matrices pass through softplus (positive) and gating
//! factors through tanh (> −1), so the composite is non-decreasing.

use rand::Rng;

use super::DENSITY_FLOOR;
use crate::nn::gru::sigmoid;
use crate::nn::ParamSet;

const W: usize = 4;
/// Parameters per channel.
pub const CHANNEL_PARAMS: usize = 65;

// Offsets inside one channel block.
const H0: usize = 0;
const B0: usize = 4;
const A0: usize = 8;
const H1: usize = 12;
const B1: usize = 28;
const A1: usize = 32;
const H2: usize = 36;
const B2: usize = 52;
const A2: usize = 56;
const H3: usize = 60;
const B3: usize = 64;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Effective (constrained) parameters of one channel.
#[derive(Debug, Clone)]
struct Effective {
    h0: [f64; W],
    b0: [f64; W],
    a0: [f64; W],
    h1: [[f64; W]; W],
    b1: [f64; W],
    a1: [f64; W],
    h2: [[f64; W]; W],
    b2: [f64; W],
    a2: [f64; W],
    h3: [f64; W],
    b3: f64,
}

impl Effective {
    fn from_raw(p: &[f64]) -> Self {
        let sp = |o: usize| -> [f64; W] { std::array::from_fn(|i| softplus(p[o + i])) };
        let th = |o: usize| -> [f64; W] { std::array::from_fn(|i| p[o + i].tanh()) };
        let raw = |o: usize| -> [f64; W] { std::array::from_fn(|i| p[o + i]) };
        let mat = |o: usize| -> [[f64; W]; W] { std::array::from_fn(|i| std::array::from_fn(|j| softplus(p[o + i * W + j]))) };
        Self {
            h0: sp(H0),
            b0: raw(B0),
            a0: th(A0),
            h1: mat(H1),
            b1: raw(B1),
            a1: th(A1),
            h2: mat(H2),
            b2: raw(B2),
            a2: th(A2),
            h3: sp(H3),
            b3: p[B3],
        }
    }
}

/// Intermediate values of one logit evaluation.
#[derive(Debug, Clone, Copy)]
struct Trace {
    x: f64,
    /// tanh of the pre-gating activations of stages 0..3.
    tpre: [[f64; W]; 3],
    /// Stage outputs v1..v3.
    v: [[f64; W]; 3],
}

/// Gradient accumulator in effective-parameter space for one channel.
#[derive(Debug, Clone, Default)]
struct EffGrad {
    h0: [f64; W],
    b0: [f64; W],
    a0: [f64; W],
    h1: [[f64; W]; W],
    b1: [f64; W],
    a1: [f64; W],
    h2: [[f64; W]; W],
    b2: [f64; W],
    a2: [f64; W],
    h3: [f64; W],
    b3: f64,
}

impl Effective {
    fn logit(&self, x: f64) -> (f64, Trace) {
        let gate = |pre: [f64; W], a: &[f64; W]| -> ([f64; W], [f64; W]) {
            let t: [f64; W] = std::array::from_fn(|i| pre[i].tanh());
            (std::array::from_fn(|i| pre[i] + a[i] * t[i]), t)
        };
        let pre0: [f64; W] = std::array::from_fn(|i| self.h0[i] * x + self.b0[i]);
        let (v1, t0) = gate(pre0, &self.a0);
        let pre1: [f64; W] = std::array::from_fn(|i| self.b1[i] + (0..W).map(|j| self.h1[i][j] * v1[j]).sum::<f64>());
        let (v2, t1) = gate(pre1, &self.a1);
        let pre2: [f64; W] = std::array::from_fn(|i| self.b2[i] + (0..W).map(|j| self.h2[i][j] * v2[j]).sum::<f64>());
        let (v3, t2) = gate(pre2, &self.a2);
        let out = self.b3 + (0..W).map(|j| self.h3[j] * v3[j]).sum::<f64>();
        (
            out,
            Trace {
                x,
                tpre: [t0, t1, t2],
                v: [v1, v2, v3],
            },
        )
    }

    /// Back-propagates `g = ∂L/∂logit`; returns `∂L/∂x`.
    fn backward(&self, tr: &Trace, g: f64, acc: &mut EffGrad) -> f64 {
        let mut dv = [0.0; W];
        for j in 0..W {
            acc.h3[j] += g * tr.v[2][j];
            dv[j] = g * self.h3[j];
        }
        acc.b3 += g;
        // Stage 2.
        let mut dpre = [0.0; W];
        for i in 0..W {
            let t = tr.tpre[2][i];
            dpre[i] = dv[i] * (1.0 + self.a2[i] * (1.0 - t * t));
            acc.a2[i] += dv[i] * t;
            acc.b2[i] += dpre[i];
        }
        let mut dv1 = [0.0; W];
        for i in 0..W {
            for j in 0..W {
                acc.h2[i][j] += dpre[i] * tr.v[1][j];
                dv1[j] += self.h2[i][j] * dpre[i];
            }
        }
        // Stage 1.
        for i in 0..W {
            let t = tr.tpre[1][i];
            dpre[i] = dv1[i] * (1.0 + self.a1[i] * (1.0 - t * t));
            acc.a1[i] += dv1[i] * t;
            acc.b1[i] += dpre[i];
        }
        let mut dv0 = [0.0; W];
        for i in 0..W {
            for j in 0..W {
                acc.h1[i][j] += dpre[i] * tr.v[0][j];
                dv0[j] += self.h1[i][j] * dpre[i];
            }
        }
        // Stage 0.
        let mut dx = 0.0;
        for i in 0..W {
            let t = tr.tpre[0][i];
            let d = dv0[i] * (1.0 + self.a0[i] * (1.0 - t * t));
            acc.a0[i] += dv0[i] * t;
            acc.b0[i] += d;
            acc.h0[i] += d * tr.x;
            dx += d * self.h0[i];
        }
        dx
    }
}

impl EffGrad {
    /// Maps effective-space gradients to raw parameters and adds them.
    fn add_to_raw(&self, p: &[f64], g: &mut [f64]) {
        let dsp = |x: f64| sigmoid(x);
        let dth = |x: f64| {
            let t = x.tanh();
            1.0 - t * t
        };
        for i in 0..W {
            g[H0 + i] += self.h0[i] * dsp(p[H0 + i]);
            g[B0 + i] += self.b0[i];
            g[A0 + i] += self.a0[i] * dth(p[A0 + i]);
            g[B1 + i] += self.b1[i];
            g[A1 + i] += self.a1[i] * dth(p[A1 + i]);
            g[B2 + i] += self.b2[i];
            g[A2 + i] += self.a2[i] * dth(p[A2 + i]);
            g[H3 + i] += self.h3[i] * dsp(p[H3 + i]);
            for j in 0..W {
                g[H1 + i * W + j] += self.h1[i][j] * dsp(p[H1 + i * W + j]);
                g[H2 + i * W + j] += self.h2[i][j] * dsp(p[H2 + i * W + j]);
            }
        }
        g[B3] += self.b3;
    }
}

/// Independent learned CDFs, one per latent channel.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorizedPrior {
    pub channels: usize,
    pub params: ParamSet,
}

impl FactorizedPrior {
    pub fn new<R: Rng>(channels: usize, rng: &mut R) -> Self {
        let mut params = ParamSet::new();
        for c in 0..channels {
            params.add(format!("prior.c{c}.h0"), &[W, 1]);
            params.add(format!("prior.c{c}.b0"), &[W]);
            params.add(format!("prior.c{c}.a0"), &[W]);
            params.add(format!("prior.c{c}.h1"), &[W, W]);
            params.add(format!("prior.c{c}.b1"), &[W]);
            params.add(format!("prior.c{c}.a1"), &[W]);
            params.add(format!("prior.c{c}.h2"), &[W, W]);
            params.add(format!("prior.c{c}.b2"), &[W]);
            params.add(format!("prior.c{c}.a2"), &[W]);
            params.add(format!("prior.c{c}.h3"), &[1, W]);
            params.add(format!("prior.c{c}.b3"), &[1]);
        }
        debug_assert_eq!(params.len(), channels * CHANNEL_PARAMS);
        // Start near a logistic of scale ~10: each softplus(H) ≈ 1/(s·fan_in)
        // with s⁴ = 10, biases small.
        let s = 10f64.powf(0.25);
        for c in 0..channels {
            let p = &mut params.data[c * CHANNEL_PARAMS..(c + 1) * CHANNEL_PARAMS];
            let inv_sp = |y: f64| y.exp_m1().ln();
            for i in 0..W {
                p[H0 + i] = inv_sp(1.0 / s);
                p[H3 + i] = inv_sp(1.0 / (s * W as f64));
                for j in 0..W {
                    p[H1 + i * W + j] = inv_sp(1.0 / (s * W as f64));
                    p[H2 + i * W + j] = inv_sp(1.0 / (s * W as f64));
                }
                for o in [B0, B1, B2] {
                    p[o + i] = rng.gen_range(-0.5..0.5);
                }
            }
            p[B3] = rng.gen_range(-0.5..0.5);
        }
        Self { channels, params }
    }

    fn channel(&self, c: usize) -> Effective {
        Effective::from_raw(&self.params.data[c * CHANNEL_PARAMS..(c + 1) * CHANNEL_PARAMS])
    }

    pub fn cdf(&self, c: usize, x: f64) -> f64 {
        sigmoid(self.channel(c).logit(x).0)
    }

    /// `P(x + ½) − P(x − ½)` for channel `c`.
    pub fn pmf(&self, c: usize, x: f64) -> f64 {
        let e = self.channel(c);
        likelihood(&e, x).0
    }

    /// `−Σ log2 max(p(x), floor)` over `values` (element `i` belongs to
    /// channel `i % channels`), with gradients: `scale·∂/∂x` written to
    /// `dx` and `scale·∂/∂φ` accumulated into `dphi` when given.
    pub fn neg_log2_likelihood(
        &self,
        values: &[f64],
        scale: f64,
        mut dx: Option<&mut [f64]>,
        dphi: Option<&mut [f64]>,
    ) -> f64 {
        let effs: Vec<Effective> = (0..self.channels).map(|c| self.channel(c)).collect();
        let mut accs: Vec<EffGrad> = vec![EffGrad::default(); self.channels];
        let want_phi = dphi.is_some();
        let mut total = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let c = i % self.channels;
            let e = &effs[c];
            let (p, lo, hi) = likelihood(e, x);
            let floored = p <= DENSITY_FLOOR;
            total -= p.max(DENSITY_FLOOR).log2();
            if floored || (dx.is_none() && !want_phi) {
                continue;
            }
            // d(−log2 p)/dp = −1/(p ln 2); dp/dhi = σ'(hi), dp/dlo = −σ'(lo).
            let gp = -scale / (p * std::f64::consts::LN_2);
            let sh = sigmoid(hi.0);
            let sl = sigmoid(lo.0);
            let g_hi = gp * sh * (1.0 - sh);
            let g_lo = -gp * sl * (1.0 - sl);
            let mut tmp = EffGrad::default();
            let acc = if want_phi { &mut accs[c] } else { &mut tmp };
            let d = e.backward(&hi.1, g_hi, acc) + e.backward(&lo.1, g_lo, acc);
            if let Some(dx) = dx.as_deref_mut() {
                dx[i] = d;
            }
        }
        if let Some(g) = dphi {
            for c in 0..self.channels {
                let o = c * CHANNEL_PARAMS;
                accs[c].add_to_raw(&self.params.data[o..o + CHANNEL_PARAMS], &mut g[o..o + CHANNEL_PARAMS]);
            }
        }
        total * scale
    }
}

/// Likelihood with the logits (and traces) of both interval ends. Evaluated
/// on the side of the logistic where it is not saturated.
fn likelihood(e: &Effective, x: f64) -> (f64, (f64, Trace), (f64, Trace)) {
    let lo = e.logit(x - 0.5);
    let hi = e.logit(x + 0.5);
    let p = if lo.0 + hi.0 > 0.0 {
        sigmoid(-lo.0) - sigmoid(-hi.0)
    } else {
        sigmoid(hi.0) - sigmoid(lo.0)
    };
    (p.max(0.0), lo, hi)
}
