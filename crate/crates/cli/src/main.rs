use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hedonic_welfare::io::{execute, resolve_out_dir, Command, LoadedConfig, PipelineError, RunConfig};

/// Hedonic welfare analysis: simulate, estimate and value frontier changes.
#[derive(Debug, Parser)]
#[command(name = "hedwel", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; HEDONIC_WELFARE_OUT overrides it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a synthetic households.csv.
    Simulate(Common),
    /// Fit per-market hedonic regressions and quantile demand.
    Estimate(Common),
    /// Compute compensating variation from fitted demand.
    Welfare(Common),
    /// Simulate (if configured), estimate and compute welfare.
    Run(Common),
    /// Run the invariant suite.
    Check(Common),
    /// Recompute the published CV table from the shipped constants.
    ReplicatePaper(Common),
    /// Draw the frontier and CV charts.
    Plot(Common),
}

fn run(cli: Cli) -> Result<String, PipelineError> {
    let (command, common, config_optional) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, false),
        Cmd::Estimate(c) => (Command::Estimate, c, false),
        Cmd::Welfare(c) => (Command::Welfare, c, false),
        Cmd::Run(c) => (Command::Run, c, false),
        Cmd::Check(c) => (Command::Check, c, true),
        Cmd::ReplicatePaper(c) => (Command::ReplicatePaper, c, true),
        Cmd::Plot(c) => (Command::Plot, c, false),
    };
    let config = match &common.config {
        Some(p) => LoadedConfig::load(p)?,
        None if config_optional => LoadedConfig::from_config(RunConfig::minimal(0))?,
        None => return Err(PipelineError::Validation("--config is required".into())),
    };
    let out = resolve_out_dir(common.out.as_deref())
        .ok_or_else(|| PipelineError::Validation("--out is required".into()))?;
    let outcome = execute(command, &config, Path::new(&out))?;
    for w in &outcome.manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(outcome.report)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
