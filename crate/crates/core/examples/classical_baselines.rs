//! Scalar (Lloyd-Max), vector (k-means) with and without Huffman coding,
//! over Q on downlink frames.

use cpri_compress::codec::evaluate;
use cpri_compress::harness::config::{RunConfig, SchemeKind};
use cpri_compress::harness::data::Prepared;
use cpri_compress::harness::schemes::train_scheme;

fn main() -> cpri_compress::Result<()> {
    let mut cfg = RunConfig::default();
    cfg.dataset.train = 256;
    cfg.dataset.val = 16;
    cfg.dataset.test = 128;
    let data = Prepared::generate(&cfg)?;
    let pipe = cfg.pipeline()?;
    println!("scheme                  Q  bits/elem      CR   EVM %   EVM dB");
    for kind in [SchemeKind::ClassicalScalar, SchemeKind::ClassicalVectorFixed, SchemeKind::ClassicalVector] {
        for q in [3, 4, 5, 6] {
            let mut s = cfg.scheme.clone();
            s.kind = kind;
            s.q_bits = q;
            let t = train_scheme(&s, &data.train, &data.val, &cfg.train, None)?;
            let e = evaluate(&t.codec, &pipe, &data.test, 64)?;
            println!(
                "{:<22} {q:>2} {:>10.3} {:>7.4} {:>7.2} {:>8.2}",
                kind.name(),
                e.bits_per_element,
                e.cr,
                e.evm.percent,
                e.evm.db
            );
        }
    }
    Ok(())
}
