//! `spike`: generate banded matrices, calibrate the partition cost constant,
//! benchmark factor/solve stages, sweep partition ratios and run the
//! residual-versus-condition study. All tabular output is CSV.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Bench(a) => commands::bench(a),
        Command::SweepRatios(a) => commands::sweep_ratios(a),
        Command::Accuracy(a) => commands::accuracy(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
