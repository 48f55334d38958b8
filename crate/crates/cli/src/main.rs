//! `tracelab`: batch entry point for every pipeline of the core library.
//!
//! Each command writes its results under `--out`, embedding the resolved
//! configuration, the crate version and the defaults table in every file.
//! Exit codes: 0 ok, 2 configuration error, 3 numerical failure.

mod commands;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use commands::Cli;
use output::{emit_error, exit_code};

fn main() -> ExitCode {
    let mut cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", &e.render().to_string(), 2);
            return ExitCode::from(2);
        }
    };
    match commands::run(&mut cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            emit_error(output::error_kind(&e), &format!("{e:#}"), code);
            ExitCode::from(code)
        }
    }
}
