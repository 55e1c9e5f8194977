//! Config-driven experiment runner for constant-stepsize averaged SGD.
//!
//! Each subcommand reads one TOML or JSON experiment config and writes
//! `<out>/<command>.csv` and `<out>/<command>.json`. Runs are fully
//! deterministic given `(config, seed)`. Exit codes: 0 success, 2 config
//! error, 3 invariant failure, 4 divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use avgsgd::experiment::{execute, CliInvocation, Command};

#[derive(Parser)]
#[command(name = "avgsgd", version, about = "Experiment runner for averaged SGD on Gaussian linear regression")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate the closed-form excess-risk bounds over the N grid.
    Bounds(RunArgs),
    /// Run the invariant verification suite (PSD chains, order checks,
    /// decomposition identity, moment constants).
    Verify(RunArgs),
    /// Sweep excess risk over N and fit the convergence rate.
    Sweep(RunArgs),
    /// Compare averaged SGD against min-norm and ridge baselines.
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (.toml, or .json for the same layout).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Force the exact risk oracle everywhere it is meaningful.
    #[arg(long, conflicts_with = "force_mc")]
    force_oracle: bool,
    /// Force Monte Carlo estimates instead of the exact oracle.
    #[arg(long)]
    force_mc: bool,
    /// Override the Monte Carlo replicate count.
    #[arg(long)]
    replicates: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Bounds(args) => (Command::Bounds, args),
        Cmd::Verify(args) => (Command::Verify, args),
        Cmd::Sweep(args) => (Command::Sweep, args),
        Cmd::Compare(args) => (Command::Compare, args),
    };
    let invocation = CliInvocation {
        config: args.config,
        out: args.out,
        seed: args.seed,
        force_oracle: args.force_oracle,
        force_mc: args.force_mc,
        replicates: args.replicates,
    };
    ExitCode::from(execute(command, &invocation) as u8)
}
