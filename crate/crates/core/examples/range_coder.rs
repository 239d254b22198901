//! Range-codes symbols drawn from a discretized Gaussian table and compares
//! the realized length with the ideal code length.

use cpri_compress::entropy::{ChannelTable, EntropyTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cpri_compress::Result<()> {
    let n = 200_000;
    for sigma in [0.3f64, 2.0, 12.0] {
        let half = (6.0 * sigma).ceil() as i64;
        let probs: Vec<f64> = (-half..=half).map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
        let table = EntropyTable {
            channels: vec![ChannelTable::from_probs(-half, &probs)?],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = rand_distr::Normal::new(0.0, sigma).expect("valid sigma");
        let symbols: Vec<i64> = (0..n).map(|_| (rng.sample::<f64, _>(normal).round() as i64).clamp(-half, half)).collect();
        let coded = table.encode(&symbols);
        assert_eq!(table.decode(&coded.bytes, n)?, symbols);
        println!(
            "sigma {sigma:>5}: width {:>3}, ideal {:.4} bit/sym, realized {:.4} bit/sym",
            table.channels[0].width(),
            table.ideal_bits(&symbols) / n as f64,
            (coded.bytes.len() * 8) as f64 / n as f64
        );
    }
    Ok(())
}
