//! Trains a small transform coder at one λ and compares it with the scalar
//! quantizer at the next integer bit depth.
//! Arguments: λ (default 500), epochs (default 3).

use cpri_compress::codec::evaluate;
use cpri_compress::harness::config::{RunConfig, SchemeKind};
use cpri_compress::harness::data::Prepared;
use cpri_compress::harness::schemes::train_scheme;

fn main() -> cpri_compress::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let lambda: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(500.0);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut cfg = RunConfig::default();
    cfg.dataset.train = 256;
    cfg.dataset.val = 32;
    cfg.dataset.test = 64;
    cfg.train.epochs = epochs;
    cfg.scheme.lambda = lambda;
    let data = Prepared::generate(&cfg)?;
    let pipe = cfg.pipeline()?;
    let neural = train_scheme(&cfg.scheme, &data.train, &data.val, &cfg.train, None)?;
    let n = evaluate(&neural.codec, &pipe, &data.test, 32)?;
    println!("neural λ={lambda}: {:.3} bits/element, CR {:.4}, EVM {:.2}% ({:.2} dB)", n.bits_per_element, n.cr, n.evm.percent, n.evm.db);
    let mut s = cfg.scheme.clone();
    s.kind = SchemeKind::ClassicalScalar;
    s.q_bits = n.bits_per_element.ceil() as u32;
    let sq = train_scheme(&s, &data.train, &data.val, &cfg.train, None)?;
    let e = evaluate(&sq.codec, &pipe, &data.test, 32)?;
    println!("scalar Q={}: {:.3} bits/element, CR {:.4}, EVM {:.2}% ({:.2} dB)", s.q_bits, e.bits_per_element, e.cr, e.evm.percent, e.evm.db);
    Ok(())
}
