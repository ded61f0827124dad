//! Run every config in a directory and print the comparison table.
//!
//! `cargo run --release --example sweep [config-dir]`

use std::path::PathBuf;

use fedbox::harness::{comparison_table, runs_table, sweep, RunOptions};
use fedbox::ExperimentConfig;

fn main() -> fedbox::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs"));
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    let configs = paths
        .iter()
        .map(|p| ExperimentConfig::load(p))
        .collect::<fedbox::Result<Vec<_>>>()?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let result = sweep(&configs, &RunOptions { threads, theory: false })?;
    for (label, err) in result.failures() {
        eprintln!("{label}: {err}");
    }
    print!("{}", runs_table(result.logs()));
    println!();
    print!("{}", comparison_table(result.logs()));
    Ok(())
}
