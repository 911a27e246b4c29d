use std::process::ExitCode;

use clap::Parser;
use labelsmooth_cli::{run_with_stdout, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // usage errors exit with code 2 inside `parse`
    let cli = Cli::parse();
    match run_with_stdout(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
