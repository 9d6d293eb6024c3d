//! `ehnet`: analyze, optimize, and simulate a two-node energy-harvesting
//! network on a random-access collision channel.
//!
//! Exit codes: 0 success, 1 internal failure, 2 usage error, 3 validation
//! error, 4 verification failure.

use clap::Parser;

mod commands;
mod config;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Internal(String),
    Verification,
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Internal(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Verification => 4,
        }
    }
}

fn main() {
    // clap itself exits with code 2 on malformed flags.
    let cli = config::Cli::parse();
    let spec = match config::resolve(&cli.command) {
        Ok(spec) => spec,
        Err(e) => fail(e),
    };
    if let Err(e) = commands::execute(&spec) {
        fail(e);
    }
}

fn fail(e: CliError) -> ! {
    match &e {
        CliError::Usage(msg) => eprintln!("usage error: {msg}"),
        CliError::Validation(msg) => eprintln!("validation error: {msg}"),
        CliError::Internal(msg) => eprintln!("internal error: {msg}"),
        CliError::Verification => {}
    }
    std::process::exit(e.exit_code())
}
