use std::path::PathBuf;
use std::process::ExitCode;

use bosonic_flow::runner::{self, Checkpoint, ExperimentConfig, Overrides};
use bosonic_flow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bosonic-flow", version, about = "Heat flow for harmonic maps with potentials on discretized surfaces")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// Write outputs here instead of `output.directory`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    /// Replace `initial_map.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Verb {
    /// Run the flow from the configured initial map.
    Run { config: PathBuf },
    /// Continue a run from a checkpoint.
    Resume { checkpoint: PathBuf, config: PathBuf },
    /// Evaluate the configured diagnostics on a saved state.
    Diagnose { checkpoint: PathBuf, config: PathBuf },
    /// Print the first nonzero eigenvalue of the domain Laplacian.
    Eigen { config: PathBuf },
}

fn load(path: &PathBuf, flags: &Flags) -> Result<ExperimentConfig> {
    let o = Overrides {
        output_dir: flags.output_dir.clone(),
        max_steps: flags.max_steps,
        seed: flags.seed,
    };
    ExperimentConfig::parse_file(path)?.with_overrides(&o)
}

fn main_inner(cli: Cli) -> Result<i32> {
    let f = &cli.flags;
    match &cli.verb {
        Verb::Run { config } => Ok(runner::run_experiment(&load(config, f)?, f.quiet)?.exit_code()),
        Verb::Resume { checkpoint, config } => {
            let cfg = load(config, f)?;
            let chk = Checkpoint::read(checkpoint)?;
            Ok(runner::resume_experiment(&chk, &cfg, f.quiet)?.exit_code())
        }
        Verb::Diagnose { checkpoint, config } => {
            let cfg = load(config, f)?;
            let chk = Checkpoint::read(checkpoint)?;
            let report = runner::diagnose(&chk, &cfg)?;
            if !f.quiet {
                println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            }
            Ok(0)
        }
        Verb::Eigen { config } => {
            let l = runner::eigen(&load(config, f)?)?;
            println!("{l:.12e}");
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
