use std::process::ExitCode;

use clap::Parser;
use walkcast_cli::{init_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads();
    ExitCode::from(run(&cli, &mut std::io::stdout().lock()))
}
