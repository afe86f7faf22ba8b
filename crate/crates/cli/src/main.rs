use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use degheat_cli::{execute, Command, ExperimentConfig, Summary};

#[derive(Parser)]
#[command(
    name = "degheat",
    version,
    about = "Experiments for the weakly degenerate heat equation"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML config; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized data (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Forward problem with boundary control at the degenerate end.
    Solve,
    /// Backward adjoint problem and its conormal trace.
    Adjoint,
    /// Admissibility report and the Carleman ratio sweep.
    Carleman,
    /// Duality-gap table.
    Duality,
    /// Penalized control synthesis.
    Control,
    /// Hardy-type bound checks under refinement.
    Hardy,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Solve => Command::Solve,
            Sub::Adjoint => Command::Adjoint,
            Sub::Carleman => Command::Carleman,
            Sub::Duality => Command::Duality,
            Sub::Control => Command::Control,
            Sub::Hardy => Command::Hardy,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let loaded = match &cli.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let mut cfg = match loaded {
        Ok(cfg) => cfg,
        Err(e) => {
            // no usable config: still leave a summary behind
            let out = cli.out.unwrap_or_else(|| PathBuf::from("out"));
            let mut summary = Summary::new(command.name(), cli.seed.unwrap_or(0));
            summary.fail(&e);
            if let Err(w) = summary.write(&out) {
                eprintln!("error: could not write summary: {w}");
            }
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cfg.output_dir.clone();
    match execute(command, &cfg, &out, cli.verbose) {
        Ok(summary) => {
            for c in summary.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {} (value {:?}, limit {:?})", c.name, c.value, c.limit);
            }
            if let Some(e) = &summary.error {
                eprintln!("error: {e}");
            }
            if cli.verbose {
                eprintln!("summary written to {}", out.join("summary.json").display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
