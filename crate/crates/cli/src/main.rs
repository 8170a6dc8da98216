//! `mixem`: sampling, fitting and random-restart studies for mixture models.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{experiment, fit, population, sample, verify};

#[derive(Debug, Parser)]
#[command(
    name = "mixem",
    version,
    about = "EM for Gaussian and Laplacian mixtures"
)]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw samples from a mixture.
    Sample(sample::SampleArgs),
    /// Fit component means to a sample file.
    Fit(fit::FitArgs),
    /// Iterate the population EM map of the symmetric two-component Laplacian mixture.
    #[command(name = "population-k2")]
    PopulationK2(population::PopulationArgs),
    /// Run a random-restart success-rate study.
    Experiment(experiment::ExperimentArgs),
    /// Run the built-in numerical checks.
    Verify(verify::VerifyArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match cli.command {
        Command::Sample(a) => sample::run(a),
        Command::Fit(a) => fit::run(a),
        Command::PopulationK2(a) => population::run(a),
        Command::Experiment(a) => experiment::run(a),
        Command::Verify(a) => verify::run(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, error::CliError::Usage(_)) {
                eprintln!("run `mixem --help` for usage");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
