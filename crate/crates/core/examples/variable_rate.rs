//! One transform, several rates: latents scaled by a before rounding.
//! Prints rate, quality and table support per level.
//! Argument: epochs (default 2).

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
    cfg.scheme.kind = SchemeKind::VariableRate;
    cfg.scheme.lambda = 5e3;
    let data = Prepared::generate(&cfg)?;
    let pipe = cfg.pipeline()?;
    let Codec::VariableRate { set, .. } = train_scheme(&cfg.scheme, &data.train, &data.val, &cfg.train, None)?.codec else {
        unreachable!("variable-rate scheme trains a rate set")
    };
    for (w, level) in set.levels.iter().enumerate() {
        let codec = Codec::VariableRate { set: set.clone(), rate: w };
        let e = evaluate(&codec, &pipe, &data.test, 32)?;
        let widths: Vec<usize> = set.table(w)?.channels.iter().map(|c| c.width()).collect();
        println!(
            "a = {:<4}: {:.3} bits/element, EVM {:.2}% ({:.2} dB), table widths {widths:?}",
            level.a, e.bits_per_element, e.evm.percent, e.evm.db
        );
    }
    println!("transform parameters stored once: {}", set.base.ae.params.len());
    Ok(())
}
