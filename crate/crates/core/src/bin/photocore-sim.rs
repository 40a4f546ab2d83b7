use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use photocore_sim::cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = run(&cli).context("photocore-sim failed");
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<photocore_sim::Error>().map_or(1, exit_code);
            ExitCode::from(code as u8)
        }
    }
}
