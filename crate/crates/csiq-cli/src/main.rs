//! Command-line experiment runner.
//!
//! `csiq run <config.toml>` executes the sweeps requested by the config and
//! writes CSV/JSON reports plus a resolved-config echo; `csiq validate
//! <config.toml>` checks schema and feasibility without running. The exit
//! code is nonzero when validation fails or any hard invariant was violated
//! during the run.

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use csiq::experiment::{emit, run, EmitMode, ExperimentConfig, RunOptions};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "csiq", version, about = "Modular CSI quantization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EmitArg {
    Csv,
    Json,
    Both,
}

impl From<EmitArg> for EmitMode {
    fn from(e: EmitArg) -> Self {
        match e {
            EmitArg::Csv => EmitMode::Csv,
            EmitArg::Json => EmitMode::Json,
            EmitArg::Both => EmitMode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute the sweeps requested by a config file.
    Run {
        /// Path to the experiment config (TOML).
        config: PathBuf,
        /// Override the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for reports (default: `out/<experiment name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results are identical for any value.
        #[arg(long)]
        threads: Option<usize>,
        /// Report formats to write.
        #[arg(long, value_enum, default_value = "both")]
        emit: EmitArg,
    },
    /// Check a config file without running anything.
    Validate {
        /// Path to the experiment config (TOML).
        config: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::from_path(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            match cfg.validate() {
                Ok(()) => {
                    println!("ok: {} ({} sweeps)", cfg.name, cfg.sweeps.len());
                    Ok(())
                }
                Err(errors) => {
                    for e in &errors {
                        eprintln!("error: {e}");
                    }
                    bail!("{} validation error(s) in {}", errors.len(), config.display());
                }
            }
        }
        Command::Run { config, seed, out, threads, emit: emit_arg } => {
            let cfg = ExperimentConfig::from_path(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let report = run(&cfg, &RunOptions { seed_override: seed, threads })
                .context("experiment run failed")?;
            let out_dir = out.unwrap_or_else(|| PathBuf::from("out").join(&report.config.name));
            let written = emit(&report, &out_dir, emit_arg.into())
                .with_context(|| format!("writing reports to {}", out_dir.display()))?;
            for path in &written {
                println!("wrote {}", path.display());
            }
            if report.invariant_violations.is_empty() {
                println!("all hard invariants held ({} rows)", report.rows.len());
                Ok(())
            } else {
                for v in &report.invariant_violations {
                    eprintln!("invariant violated: {v}");
                }
                bail!("{} invariant violation(s)", report.invariant_violations.len());
            }
        }
    }
}
