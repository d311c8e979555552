use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use netsca::algorithms::AlgorithmKind;
use netsca::harness::{self, ExperimentConfig};

/// Distributed power and channel allocation experiments.
#[derive(Debug, Parser)]
#[command(name = "netsca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every (algorithm, α, seed) combination of a config.
    Run {
        config: PathBuf,
        /// Output directory; overrides the config's `run.output_dir`.
        #[arg(long, env = "NETSCA_OUT")]
        out: Option<PathBuf>,
        /// Concurrent runs; overrides the config (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// One-shot solve of a single slot with trajectory and gradient check.
    Diagnose {
        config: PathBuf,
        #[arg(long)]
        algorithm: AlgorithmKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        slot: usize,
        #[arg(long, env = "NETSCA_OUT")]
        out: Option<PathBuf>,
    },
    /// Parse and validate a config.
    Validate { config: PathBuf },
}

fn output_dir(cli: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli.or_else(|| cfg.run.output_dir.clone())
        .unwrap_or_else(|| Path::new("results").join(&cfg.name))
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out, workers } => {
            let cfg = load(&config)?;
            let out = output_dir(out, &cfg);
            let report = harness::run_experiment(&cfg, &out, workers.unwrap_or(cfg.run.workers))?;
            print!("{report}");
            println!("elapsed {:.1}s, results in {}", report.elapsed.as_secs_f64(), out.display());
            let failed = report.failures().count();
            if failed > 0 {
                eprintln!("{failed} run(s) failed; see {}", out.join("errors.log").display());
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Diagnose {
            config,
            algorithm,
            seed,
            slot,
            out,
        } => {
            let cfg = load(&config)?;
            let out = output_dir(out, &cfg);
            let d = harness::diagnose(&cfg, algorithm, seed, slot, &out)?;
            print!("{d}");
            for f in &d.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Validate { config } => {
            let cfg = load(&config)?;
            println!(
                "{}: ok ({} BS, {} users, {} algorithms x {} alphas x {} seeds, T = {})",
                cfg.name,
                cfg.graph()?.len(),
                cfg.num_users(),
                cfg.run.algorithms.len(),
                cfg.utility.alphas.len(),
                cfg.run.seeds.len(),
                cfg.run.horizon
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
