use std::process::ExitCode;

use clap::Parser;

use avisim::cli::{run, Cli};

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => ExitCode::from(run(cli) as u8),
        Err(err) => {
            // --help and --version land on stdout and exit cleanly; real
            // argument errors go to stderr as usage failures
            let code = if err.use_stderr() { 1u8 } else { 0u8 };
            let _ = err.print();
            ExitCode::from(code)
        }
    }
}
