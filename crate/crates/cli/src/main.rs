//! `lsmi`: command-line front end for the semi-supervised SMI estimator.

mod args;
mod commands;
mod error;
mod manifest;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = args::Cli::parse();
    if let Err(e) = commands::run(cli, argv) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
