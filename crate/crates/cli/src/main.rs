use std::process::ExitCode;

use clap::Parser;
use cvconv::args::Cli;
use cvconv::{run, EXIT_OK, EXIT_VERIFICATION};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(&cli) {
        Ok(outcome) if outcome.passed => EXIT_OK,
        Ok(_) => EXIT_VERIFICATION,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
