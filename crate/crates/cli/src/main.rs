//! temscan: FFT-based phase identification for high-resolution TEM images.
//!
//! Exit codes: 0 on success, 1 on usage or I/O errors, 2 when the run was
//! valid but found nothing (reports are still written).

mod args;
mod run;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are exit 1 under this tool's contract.
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run::dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
