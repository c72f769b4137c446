pub mod common;
pub mod error;
pub mod gradcheck;
pub mod grid;
pub mod manifest;
pub mod synth;
pub mod train;

use std::ffi::OsString;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "furcnet", version, about = "Furcated networks for multi-task property regression")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic descriptor CSV and its generator coefficients.
    Synth(synth::SynthArgs),
    /// Cross-validate one architecture and write the best fold's model and a report.
    Train(train::TrainArgs),
    /// Search the depth/width grid and report the winners.
    Grid(grid::GridArgs),
    /// Compare backpropagated gradients against central differences.
    Gradcheck(gradcheck::GradcheckArgs),
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth::run(a).map(|_| true),
        Command::Train(a) => train::run(a).map(|_| true),
        Command::Grid(a) => grid::run(a).map(|_| true),
        Command::Gradcheck(a) => gradcheck::run(a),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
