//! `icox`: simulate interval-censored studies, fit sparse neural Cox models,
//! trace regularization paths, predict survival curves, replicate benchmarks
//! and verify reproducibility from run manifests.

mod args;
mod commands;
mod error;
mod manifest;
mod schema;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::error::CliError;

fn run(command: Command) -> Result<(), CliError> {
    match &command {
        Command::Rerun(a) => commands::cmd_rerun(a),
        _ => commands::run_recorded(&command).map(|_| ()),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
