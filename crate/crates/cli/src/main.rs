mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => commands::estimate(a),
        Command::Distsim(a) => commands::distsim(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Bounds(a) => commands::bounds(a),
        Command::Validate(a) => match commands::validate_cmd(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::SweepDelta(a) => commands::sweep(a),
        Command::BetaSweep(a) => commands::beta(a),
        Command::Reproduce(a) => commands::reproduce(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
