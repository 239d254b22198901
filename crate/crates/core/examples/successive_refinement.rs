//! Three-layer refinement stack; prints quality and rate after each
//! decoded layer. Argument: epochs per layer (default 2).

use cpri_compress::codec::{evaluate, Codec};
use cpri_compress::harness::config::{RunConfig, SchemeKind};
use cpri_compress::harness::data::Prepared;
use cpri_compress::harness::schemes::train_scheme;

fn main() -> cpri_compress::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let mut cfg = RunConfig::default();
    cfg.dataset.train = 256;
    cfg.dataset.val = 32;
    cfg.dataset.test = 64;
    cfg.train.epochs = epochs;
    cfg.scheme.kind = SchemeKind::Refinement;
    let data = Prepared::generate(&cfg)?;
    let pipe = cfg.pipeline()?;
    let Codec::Refinement { stack, .. } = train_scheme(&cfg.scheme, &data.train, &data.val, &cfg.train, None)?.codec else {
        unreachable!("refinement scheme trains a stack")
    };
    for layers in 1..=stack.len() {
        let codec = Codec::Refinement { stack: stack.clone(), layers };
        let e = evaluate(&codec, &pipe, &data.test, 32)?;
        println!(
            "layers 1..={layers} (λ {}): {:.3} bits/element, EVM {:.2}% ({:.2} dB)",
            cfg.scheme.refinement_lambdas[layers - 1],
            e.bits_per_element,
            e.evm.percent,
            e.evm.db
        );
    }
    Ok(())
}
