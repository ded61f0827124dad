//! Train the desk-scale synthetic task with plain federated averaging and
//! print the accuracy curve.
//!
//! `cargo run --release --example federated_training [config.toml]`

use std::path::PathBuf;
use std::time::Instant;

use fedbox::harness::{run_baseline, RunOptions};
use fedbox::ExperimentConfig;

fn main() -> fedbox::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/baseline.toml"));
    let config = ExperimentConfig::load(&path)?;
    let start = Instant::now();
    let log = run_baseline(
        &config,
        &RunOptions {
            threads: 1,
            theory: false,
        },
    )?;
    for r in log.rounds.iter().filter(|r| r.round % 20 == 19 || r.round == 0) {
        println!("round {:>4}  accuracy {:.4}", r.round + 1, r.test_accuracy);
    }
    let s = log.summary.as_ref().expect("baseline has a summary");
    println!(
        "initial {:.4}, final window mean {:.4}, {:.1}s",
        s.initial_accuracy,
        s.a_att,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
