//! `leap`: compute Euler characteristic transforms, positional encodings,
//! synthetic datasets and cross-validated training runs from the shell.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ect(a) => commands::ect::run(a, cli.seed),
        Command::Encode(a) => commands::encode::run(a, cli.seed),
        Command::Synth(a) => commands::synth::run(a, cli.seed),
        Command::Train(a) => commands::train::run(a, cli.seed),
        Command::Ablate(a) => commands::ablate::run(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
