//! Evaluate the robustness condition, the convergence bound and the
//! max-versus-expectation comparison.

use std::path::PathBuf;

use fedbox::theory::{impact_comparison, report, theorem1_check, theorem2_bound, TheoryInputs};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let check = theorem1_check(&[-2.0, 2.0], &[0.4, 0.6])?;
    println!(
        "inner products [-2, 2], P = [0.4, 0.6]: threshold {} robust {} E<.,.> {:.2}",
        check.threshold, check.robust, check.expected_inner
    );

    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("examples/theory_inputs.toml"));
    let inputs: TheoryInputs = toml::from_str(&std::fs::read_to_string(&path)?)?;
    print!("{}", report(&inputs)?);
    for t in [100u64, 10_000, 1_000_000] {
        println!(
            "T = {t:>9}: bound {:.6e}",
            theorem2_bound(&TheoryInputs { t, ..inputs })?
        );
    }
    println!(
        "limit 15 E[alpha] G_g^2 = {:.6e}",
        15.0 * inputs.expected_alpha * inputs.g_g2
    );

    let alpha = vec![
        vec![0.9, 0.1, 0.2, 0.3],
        vec![0.2, 0.8, 0.1, 0.2],
        vec![0.1, 0.2, 0.7, 0.6],
    ];
    let cmp = impact_comparison(&alpha, &[0.25; 4], &[0.5, 0.25, 0.25])?;
    println!(
        "mixed attacker {:.4} <= best response {:.4}",
        cmp.expected, cmp.worst_case
    );
    Ok(())
}
