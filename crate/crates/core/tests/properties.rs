//! Property tests over public entry points.

use cpri_compress::entropy::{ChannelTable, EntropyTable};
use cpri_compress::multirate::{decimate, interpolate, ResamplerSpec};
use num_complex::Complex64;
use proptest::prelude::*;

fn table_and_symbols() -> impl Strategy<Value = (i64, Vec<f64>, Vec<prop::sample::Index>)> {
    (-50i64..50, prop::collection::vec(1e-9f64..1.0, 1..80), prop::collection::vec(any::<prop::sample::Index>(), 0..400))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn range_coder_is_lossless_and_near_ideal((low, probs, picks) in table_and_symbols()) {
        let table = EntropyTable { channels: vec![ChannelTable::from_probs(low, &probs).unwrap()] };
        let symbols: Vec<i64> = picks.iter().map(|i| low + i.index(probs.len()) as i64).collect();
        let coded = table.encode(&symbols);
        prop_assert_eq!(coded.clamped, 0);
        prop_assert_eq!(table.decode(&coded.bytes, symbols.len()).unwrap(), symbols.clone());
        let bound = table.ideal_bits(&symbols) + 32.0 + 0.05 * symbols.len() as f64;
        prop_assert!((coded.bytes.len() * 8) as f64 <= bound);
    }

    #[test]
    fn out_of_support_symbols_are_clamped(v in -1000i64..1000) {
        let table = EntropyTable { channels: vec![ChannelTable::from_probs(-2, &[0.1, 0.2, 0.4, 0.2, 0.1]).unwrap()] };
        let coded = table.encode(&[v]);
        prop_assert_eq!(table.decode(&coded.bytes, 1).unwrap(), vec![v.clamp(-2, 2)]);
        prop_assert_eq!(coded.clamped, usize::from(!(-2..=2).contains(&v)));
    }

    #[test]
    fn resampler_lengths_and_linearity(blocks in 1usize..6, a in -2.0f64..2.0, seed in any::<u64>()) {
        let rs = ResamplerSpec::new(5, 8, 121, 8.0).unwrap();
        let n = 8 * blocks * 4;
        let x: Vec<Complex64> = (0..n)
            .map(|i| {
                let t = (seed.wrapping_add(i as u64) % 97) as f64 / 97.0 - 0.5;
                Complex64::new(t, 0.5 - t * t)
            })
            .collect();
        let y = decimate(&x, &rs).unwrap();
        prop_assert_eq!(y.len(), n * 5 / 8);
        prop_assert_eq!(interpolate(&y, &rs).unwrap().len(), n);
        let scaled: Vec<Complex64> = x.iter().map(|v| v * a).collect();
        let ys = decimate(&scaled, &rs).unwrap();
        for (p, q) in y.iter().zip(&ys) {
            prop_assert!((p * a - q).norm() <= 1e-12 * (1.0 + p.norm()));
        }
    }
}
