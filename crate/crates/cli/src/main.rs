//! `msrd` command-line tool.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors.

mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Locmap(a) => commands::locmap(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Boxes(a) => commands::boxes(a),
        Command::Eval(a) => commands::eval(a),
        Command::Heatmap(a) => commands::heatmap(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
