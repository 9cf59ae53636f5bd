//! `voxelseg` — one binary tying the library into reproducible workflows:
//! generate cases, assign folds, train, score, compare, verify gradients.
//!
//! Every command writes exactly its declared artifact, and the same command
//! line over the same inputs produces the same bytes. Failures print one
//! line on stderr and exit with a stable code family: 2 for usage, 3 for
//! file I/O or format, 4 for validation, 5 for numeric failure.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "voxelseg", version, about = "Volumetric segmentation workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic nested-ellipsoid cases
    GenPhantoms(commands::gen::Args),
    /// Build the stratified five-fold assignment for a case directory
    Split(commands::split::Args),
    /// Train one fold and write a checkpoint plus its epoch history
    Train(commands::train::Args),
    /// Score a checkpoint on one split of one fold
    Eval(commands::eval::Args),
    /// Compare two per-fold metric tables with paired t-tests
    Stats(commands::stats::Args),
    /// Verify every backward pass against finite differences
    Gradcheck(commands::gradcheck::Args),
    /// Report parameter count and FLOPs for a model configuration
    Info(commands::info::Args),
}

fn exit_code(err: &voxelseg::Error) -> u8 {
    use voxelseg::Error;
    match err {
        Error::Io { .. } | Error::Format { .. } | Error::Volume(_) => 3,
        Error::Shape(_) | Error::Validation(_) => 4,
        Error::Numeric(_) => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenPhantoms(args) => commands::gen::run(args),
        Command::Split(args) => commands::split::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Stats(args) => commands::stats::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
        Command::Info(args) => commands::info::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
