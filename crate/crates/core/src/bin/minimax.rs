use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use minimax_core::experiments::{run, Subcommand};
use minimax_core::Error;

/// Minimax risk brackets and closed-form solvers.
#[derive(Debug, Parser)]
#[command(name = "minimax", version)]
struct Cli {
    /// One of: phi, bracket, figure1, figure2, sequence, kernel, covshift, markov, estimate, dicker, mourtada.
    subcommand: String,
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output file (CSV for figure1/figure2, JSON otherwise).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn report(err: &Error) -> ExitCode {
    let key = match err {
        Error::Config { key, .. } => key.clone(),
        Error::InvalidParameter { name, .. } => Some(name.to_string()),
        _ => None,
    };
    let body = serde_json::json!({
        "error": err.kind(),
        "key": key,
        "message": err.to_string(),
    });
    eprintln!("{body}");
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("MINIMAX_WORKERS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let result = Subcommand::parse(&cli.subcommand).and_then(|sub| run(sub, &cli.config, &cli.out, cli.seed));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
