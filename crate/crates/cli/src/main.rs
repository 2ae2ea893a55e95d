use std::process::ExitCode;

use clap::Parser;
use rme_lab::{dispatch, Cli, EXIT_USAGE};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = std::io::stdout().lock();
    match dispatch(&cli, &mut out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("rme-lab: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
