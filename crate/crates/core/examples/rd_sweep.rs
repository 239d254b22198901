//! Trains a small grid (scalar, vector, neural) and writes the R-D CSV and
//! SVG through the same path as `cpri sweep`. Argument: epochs (default 2).

use cpri_compress::harness::config::{RunConfig, SchemeKind};
use cpri_compress::harness::data::Prepared;
use cpri_compress::harness::{cmd_sweep, cmd_train_grid};

fn main() -> cpri_compress::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(2);
    let mut cfg = RunConfig::default();
    cfg.output = std::env::temp_dir().join("cpri-rd-sweep");
    cfg.dataset.train = 256;
    cfg.dataset.val = 32;
    cfg.dataset.test = 64;
    cfg.train.epochs = epochs;
    cfg.sweep.schemes = vec![SchemeKind::ClassicalScalar, SchemeKind::ClassicalVector, SchemeKind::Neural];
    cfg.sweep.q_grid = vec![3, 4, 5];
    cfg.sweep.lambda_grid = vec![1e2, 1e3];
    let data = Prepared::generate(&cfg)?;
    cmd_train_grid(&cfg, &data, false)?;
    let out = cmd_sweep(&cfg, &data.test, 1)?;
    for r in &out.rows {
        println!("{:<18} {:>7} {:>8.3} b/e  EVM {:>6.2} dB", r.scheme, r.rate_param, r.bits_per_element, r.evm_db);
    }
    for c in &out.checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {} and {}", out.csv.display(), out.svg.display());
    Ok(())
}
