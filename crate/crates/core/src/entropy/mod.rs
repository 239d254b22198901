//! Integer-rounded latents, a learned factorized prior, PMF tables and the
//! range coder that turns them into payload bytes.

pub mod model;
pub mod prior;
pub mod range;
pub mod table;

pub use model::NeuralModel;
pub use prior::FactorizedPrior;
pub use table::{ChannelTable, CodedSymbols, EntropyTable};

/// Likelihoods below this are clamped before taking the logarithm.
pub const DENSITY_FLOOR: f64 = 1.0 / (1u64 << 30) as f64;
/// Smallest table probability, matching one unit of 16-bit frequency.
pub const TABLE_PROB_FLOOR: f64 = 1.0 / 65536.0;
/// Default trade-off grid.
pub const LAMBDA_GRID: [f64; 4] = [1e2, 5e2, 1e3, 5e3];

/// `⌊z + ½⌋` elementwise (half-integers round up).
pub fn round_latent(z: &[f64]) -> Vec<i64> {
    z.iter().map(|&v| (v + 0.5).floor() as i64).collect()
}

/// Mean bits per element of noise-relaxed latents under `model`, with
/// gradients w.r.t. the latents (`dz`) and the prior parameters (`dphi`)
/// when requested.
pub fn rate_estimate(z_noisy: &[f64], model: &FactorizedPrior, dz: Option<&mut [f64]>, dphi: Option<&mut [f64]>) -> f64 {
    let n = z_noisy.len().max(1) as f64;
    model.neg_log2_likelihood(z_noisy, 1.0 / n, dz, dphi)
}

/// `λ·D + I`.
pub fn rd_loss(distortion: f64, rate: f64, lambda: f64) -> f64 {
    lambda * distortion + rate
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rounding_rule() {
        assert_eq!(round_latent(&[1.5, -0.5, 2.49, -1.5, -0.51]), vec![2, 0, 2, -1, -1]);
    }

    #[test]
    fn rd_loss_limits() {
        assert_eq!(rd_loss(0.3, 2.0, 0.0), 2.0);
        assert_eq!(rd_loss(0.0, 2.0, 500.0), 2.0);
    }

    #[test]
    fn sharpening_prior_lowers_rate_of_point_mass() {
        // Latents at 0 widened by the relaxation noise: fitting the prior
        // drives the estimated rate toward zero.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = FactorizedPrior::new(1, &mut rng);
        let mut opt = crate::nn::Adam::new(model.params.len(), 0.05);
        let eval: Vec<f64> = (0..2048).map(|i| (i as f64 + 0.5) / 2048.0 - 0.5).collect();
        let mut rates = vec![rate_estimate(&eval, &model, None, None)];
        for step in 1..=300 {
            let z: Vec<f64> = (0..256).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let mut g = model.params.zeros_like();
            rate_estimate(&z, &model, None, Some(&mut g));
            opt.step(&mut model.params.data, &g);
            if step == 30 || step == 300 {
                rates.push(rate_estimate(&eval, &model, None, None));
            }
        }
        assert!(rates[1] < rates[0] && rates[2] < rates[1], "{rates:?}");
        assert!(rates[2] < 0.1, "final rate {}", rates[2]);
    }

    #[test]
    fn uniform_on_support_rate_is_log_width() {
        // A table uniform over W symbols costs exactly log2 W bits each.
        let w = 8;
        let t = EntropyTable {
            channels: vec![ChannelTable::from_probs(0, &vec![1.0 / w as f64; w]).unwrap()],
        };
        let symbols: Vec<i64> = (0..800).map(|i| i % w as i64).collect();
        assert!((t.ideal_bits(&symbols) / 800.0 - (w as f64).log2()).abs() < 1e-12);
    }
}
