use std::path::PathBuf;

use anyhow::{Context, Result};
use beamforge::harness::{self, ExperimentConfig};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "beamforge", version, about = "Training-beam design and channel-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design the sensing matrices of every cell and write them as CSV.
    Design(Common),
    /// NMSE, spectral-efficiency and objective sweeps.
    Sweep(Common),
    /// Histogram of off-diagonal coherences of the equivalent dictionary.
    Hist(Common),
    /// Objective value per iteration of the proposed designs.
    Trace(Common),
}

#[derive(Args)]
struct Common {
    /// Key-value configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)
            .with_context(|| format!("reading config {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Design(c) => {
            let cfg = c.load()?;
            for path in harness::run_design(&cfg)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep(c) => {
            let cfg = c.load()?;
            let rows = harness::run_sweep(&cfg)?;
            println!("{} ({} rows)", cfg.output_dir.join(harness::SWEEP_FILE).display(), rows.len());
        }
        Command::Hist(c) => {
            let cfg = c.load()?;
            let rows = harness::run_histogram(&cfg)?;
            println!("{} ({} rows)", cfg.output_dir.join(harness::HISTOGRAM_FILE).display(), rows.len());
        }
        Command::Trace(c) => {
            let cfg = c.load()?;
            let rows = harness::run_convergence_trace(&cfg)?;
            println!("{} ({} rows)", cfg.output_dir.join(harness::TRACE_FILE).display(), rows.len());
        }
    }
    Ok(())
}
