//! Fixed-rate latent schemes: one warm autoencoder, then clipped uniform and
//! vector quantization of its latents at Q bits per element.
//! Arguments: Q (default 4), epochs (default 3).

use cpri_compress::codec::evaluate;
use cpri_compress::harness::config::{RunConfig, SchemeKind};
use cpri_compress::harness::data::Prepared;
use cpri_compress::harness::schemes::{train_scheme, train_warm};

fn main() -> cpri_compress::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let q: u32 = args.next().and_then(|a| a.parse().ok()).unwrap_or(4);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut cfg = RunConfig::default();
    cfg.dataset.train = 256;
    cfg.dataset.val = 32;
    cfg.dataset.test = 64;
    cfg.train.epochs = epochs;
    cfg.scheme.warm_epochs = epochs;
    cfg.scheme.q_bits = q;
    let data = Prepared::generate(&cfg)?;
    let pipe = cfg.pipeline()?;
    cfg.scheme.kind = SchemeKind::LatentVq;
    let (warm, _) = train_warm(&cfg.scheme, &data.train, &data.val, &cfg.train)?;
    for kind in [SchemeKind::LatentUniform, SchemeKind::LatentVq] {
        cfg.scheme.kind = kind;
        let t = train_scheme(&cfg.scheme, &data.train, &data.val, &cfg.train, Some(&warm))?;
        let e = evaluate(&t.codec, &pipe, &data.test, 32)?;
        println!(
            "{} Q={q}: {:.2} bits/element, EVM {:.2}% ({:.2} dB), fine-tune kept {}",
            kind.name(),
            e.bits_per_element,
            e.evm.percent,
            e.evm.db,
            t.history["fine_tune_kept"]
        );
    }
    Ok(())
}
