//! Generates small train/val/test splits for both scenarios and reads one
//! back.

use cpri_compress::harness::config::{ChannelConfig, RunConfig};
use cpri_compress::harness::data::{gen_dataset, load_split, Split};
use cpri_compress::signal::Scenario;

fn main() -> cpri_compress::Result<()> {
    let root = std::env::temp_dir().join("cpri-gen-dataset");
    for scenario in [Scenario::Downlink, Scenario::Uplink] {
        let mut cfg = RunConfig::default();
        cfg.frame.scenario = scenario;
        if scenario == Scenario::Uplink {
            cfg.channel = Some(ChannelConfig::default());
        }
        cfg.dataset.dir = root.join(format!("{scenario:?}").to_lowercase());
        cfg.dataset.train = 64;
        cfg.dataset.val = 16;
        cfg.dataset.test = 16;
        for path in gen_dataset(&cfg)? {
            println!("wrote {}", path.display());
        }
        let test = load_split(&cfg, Split::Test)?;
        let power: f64 = test.frames[0].iter().map(|c| c.norm_sqr()).sum::<f64>() / test.frames[0].len() as f64;
        println!("{scenario:?}: {} test frames of {} samples, first frame power {power:.4}", test.frames.len(), test.frames[0].len());
    }
    Ok(())
}
