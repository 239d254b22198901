//! Command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use cpri_compress::harness::config::RunConfig;
use cpri_compress::harness::data::Prepared;
use cpri_compress::harness;
use cpri_compress::Result;

#[derive(Parser)]
#[command(name = "cpri", version, about = "Fronthaul IQ compression: datasets, training, coding and R-D sweeps")]
struct Cli {
    /// Force single-threaded, bit-reproducible execution (overrides CPRI_THREADS).
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write train/val/test frame files.
    GenDataset {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the configured scheme, or every sweep point with --grid.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Bundle path (single-scheme mode).
        #[arg(long, default_value = "model.cprb")]
        out: PathBuf,
        #[arg(long)]
        grid: bool,
        /// Retrain sweep points whose bundle already exists.
        #[arg(long)]
        force: bool,
    },
    /// Frames to a record file of framed bitstreams.
    Encode {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Record file back to time-domain frames.
    Decode {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// EVM, rate and CR of a bundle on a frame file.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        /// Measure previously encoded records instead of coding in memory.
        #[arg(long, requires = "decoded")]
        records: Option<PathBuf>,
        #[arg(long, requires = "records")]
        decoded: Option<PathBuf>,
    },
    /// Evaluate every trained sweep point; write CSV and SVG.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Empirical against analytic covariance of decimated downlink frames.
    Covcheck {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        frames: usize,
        #[arg(long, default_value = "covcheck.json")]
        out: PathBuf,
    },
    /// Print a bundle's manifest summary.
    InspectBundle { path: PathBuf },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

fn config(path: Option<&Path>, threads: usize) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.train.threads = threads;
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<()> {
    let threads = harness::thread_count(cli.deterministic)?;
    match cli.cmd {
        Cmd::GenDataset { config: c } => {
            for p in harness::data::gen_dataset(&config(c.as_deref(), threads)?)? {
                println!("{}", p.display());
            }
        }
        Cmd::Train { config: c, out, grid, force } => {
            let cfg = config(c.as_deref(), threads)?;
            let data = Prepared::load(&cfg)?;
            if grid {
                for p in harness::cmd_train_grid(&cfg, &data, force)? {
                    println!("{}", p.display());
                }
            } else {
                harness::cmd_train(&cfg, &data, &out)?;
                println!("{}", out.display());
            }
        }
        Cmd::Encode { bundle, frames, out } => {
            let n = harness::cmd_encode(&bundle, &frames, &out)?;
            println!("{n} bitstreams written to {}", out.display());
        }
        Cmd::Decode { bundle, records, out } => {
            let n = harness::cmd_decode(&bundle, &records, &out)?;
            println!("{n} frames written to {}", out.display());
        }
        Cmd::Evaluate { bundle, frames, records, decoded } => {
            let coded = records.as_deref().zip(decoded.as_deref());
            print_json(&harness::cmd_evaluate(&bundle, &frames, coded)?);
        }
        Cmd::Sweep { config: c } => {
            let cfg = config(c.as_deref(), threads)?;
            let test = harness::data::load_split(&cfg, harness::data::Split::Test)?;
            let op = harness::data::recon_op(&cfg)?;
            let test = harness::data::prepare(&cfg, &test.frames, &op)?;
            let out = harness::cmd_sweep(&cfg, &test, threads)?;
            for c in &out.checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{}\n{}", out.csv.display(), out.svg.display());
        }
        Cmd::Covcheck { config: c, frames, out } => {
            let r = harness::cmd_covcheck(&config(c.as_deref(), threads)?, frames, &out)?;
            print_json(&r);
        }
        Cmd::InspectBundle { path } => print_json(&harness::cmd_inspect_bundle(&path)?),
        Cmd::DefaultConfig => print!("{}", RunConfig::default().to_toml()?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
