//! `condcomp`: generate synthetic data, compress labelled datasets, evaluate
//! compressed sets and run seeded benchmark sweeps.
//!
//! Exit status is 0 on success, 2 on a usage or configuration error and 1
//! when a run fails.

mod benchmark;
mod compress;
mod config;
mod eval;
mod generate;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::CliError;

#[derive(Debug, Parser)]
#[command(name = "condcomp", version, about = "Conditional distribution compression")]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "CONDCOMP_OUT_DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Generate(generate::GenerateArgs),
    /// Compress a CSV dataset with one of the eight methods.
    Compress(compress::CompressArgs),
    /// Score a compressed set against the data it was built from.
    Eval(eval::EvalArgs),
    /// Sweep methods, sizes and seeds on a synthetic scenario.
    Benchmark(benchmark::BenchmarkArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("."));
    match cli.command {
        Command::Generate(args) => generate::run(args, &out_dir),
        Command::Compress(args) => compress::run(args, &out_dir),
        Command::Eval(args) => eval::run(args, &out_dir),
        Command::Benchmark(args) => benchmark::run(args, &out_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
