mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

fn run(cli: &Cli) -> embcache::Result<String> {
    match &cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Sweep(a) => commands::sweep_cmd(a),
        Command::Label(a) => commands::label(a),
        Command::Train(a) => commands::train_cmd(a),
        Command::Replay(a) => commands::replay_cmd(a),
        Command::Report(a) => commands::report(a),
    }
}

fn fail(category: &str, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error[{category}]: {msg}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let argv = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(e.category(), e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let first = e.to_string();
            let first = first.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.category(), e),
    }
}
