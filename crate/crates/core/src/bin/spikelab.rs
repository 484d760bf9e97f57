use std::io::Write;

use clap::Parser;
use spikelab::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("SPIKELAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let outcome = cli::execute(&cli);
    let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
    let _ = std::io::stderr().write_all(outcome.stderr.as_bytes());
    std::process::exit(outcome.code);
}
