//! `toss` command-line tool.
//!
//! Exit status: 0 success, 1 usage, 2 data error, 3 adapter error.

mod args;
mod commands;
mod pipeline;
mod stub;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use toss::Error;

use args::{Cli, Command};

const USAGE: u8 = 1;
const DATA: u8 = 2;
const ADAPTER: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    if e.is_adapter() {
        return ADAPTER;
    }
    match e {
        Error::InvalidArgument(_) | Error::Unknown { .. } => USAGE,
        Error::Query { source, .. } => exit_code(source),
        _ => DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(USAGE),
            };
        }
    };
    let result = match &cli.command {
        Command::Index(a) => commands::index(a),
        Command::Search(a) => commands::search(a),
        Command::Eval(a) => commands::eval(a),
        Command::Overlap(a) => commands::overlap(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::AdapterStub(a) => stub::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
