//! `trustgrid`: run scenarios, sweeps and dynamics checks from JSON configs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use trustgrid_cli::output::Format;
use trustgrid_cli::{dynamics, run, sweep, CliError};

#[derive(Debug, Parser)]
#[command(name = "trustgrid", version, about = "Trust-based protection of a distributed state estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Config file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config (the first seed for sweeps).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write its trace.
    Run(Common),
    /// Run every cell of a sweep grid and write the summary table.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Check fixed points, integrate the trust ODE and compare with the
    /// stochastic iterates.
    Dynamics(Common),
    /// Parse and check a scenario, sweep or dynamics config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => run::cmd_run(&c.config, c.seed, &c.out, c.format),
        Command::Sweep { common: c, jobs } => {
            sweep::cmd_sweep(&c.config, c.seed, &c.out, c.format, jobs).map(drop)
        }
        Command::Dynamics(c) => dynamics::cmd_dynamics(&c.config, c.seed, &c.out, c.format).map(drop),
        Command::Validate { config } => trustgrid_cli::validate(&config).map(|msg| println!("{msg}")),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
