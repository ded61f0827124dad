//! Rule-targeted attacks against static rules versus the dynamic defenses.
//!
//! Each static server faces an attack optimised for its own rule; the dynamic
//! servers sample from the same four rules. Prints the median negative impact
//! over seeds.
//!
//! `cargo run --release --example adaptive_attack_comparison [config.toml] [seeds]`

use std::path::PathBuf;

use fedbox::harness::{median, run_attacked, run_baseline, AttackConfig, DefenseSpec, ModeName, RunOptions};
use fedbox::{AttackKind, ExperimentConfig, RuleKind};
use rayon::prelude::*;

fn main() -> fedbox::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/configs/adaptive.toml"));
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seed count"));
    let base = ExperimentConfig::load(&path)?;
    let options = RunOptions {
        threads: 1,
        theory: false,
    };

    let baselines = (1..=seeds)
        .into_par_iter()
        .map(|seed| run_baseline(&ExperimentConfig { seed, ..base.clone() }, &options))
        .collect::<fedbox::Result<Vec<_>>>()?;

    let mut defenses: Vec<(String, DefenseSpec)> = [
        RuleKind::Krum,
        RuleKind::Median,
        RuleKind::TrimmedMean,
        RuleKind::Bulyan,
    ]
    .iter()
    .map(|&r| (format!("static {}", r.name()), DefenseSpec::fixed(r)))
    .collect();
    for mode in [
        ModeName::WhiteBoxDynamic,
        ModeName::BlackBoxUniform,
        ModeName::BlackBoxWeighted,
    ] {
        defenses.push((DefenseSpec::dynamic(mode).label(), DefenseSpec::dynamic(mode)));
    }

    for kind in [AttackKind::Fang, AttackKind::She] {
        println!("{}", kind.name());
        for (name, defense) in &defenses {
            let impacts = baselines
                .par_iter()
                .map(|baseline| {
                    let config = ExperimentConfig {
                        defense: defense.clone(),
                        attack: Some(AttackConfig::new(kind)),
                        ..baseline.config.clone()
                    };
                    let log = run_attacked(&config, baseline, &options)?;
                    Ok(log.summary.expect("summary").negative_impact)
                })
                .collect::<fedbox::Result<Vec<f64>>>()?;
            println!("  {name:<20} I = {:.4}", median(impacts));
        }
    }
    Ok(())
}
