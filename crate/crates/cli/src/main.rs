use std::process::ExitCode;

use clap::Parser;
use translab_cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let provenance = format!("translab {} {}", env!("CARGO_PKG_VERSION"), args.join(" "));
    match run(&cli, &provenance) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
