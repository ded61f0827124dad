//! Sample aggregation rules under each defense mode and show the realised
//! rule frequencies, including the trusted-update weighting.

use fedbox::defense::defend_round;
use fedbox::rng::stream;
use fedbox::{AggregationRule, DefenseMode, DefenseStrategy, UpdateVector};

fn main() -> fedbox::Result<()> {
    let mut updates = vec![UpdateVector::new(vec![-8.0, 8.0])?; 2];
    for i in 0..10 {
        let t = i as f64 * 0.05;
        updates.push(UpdateVector::new(vec![1.0 + t, 1.0 - t])?);
    }
    let weights = vec![1.0; updates.len()];
    let trusted = UpdateVector::new(vec![1.0, 1.0])?;
    let candidates = vec![
        AggregationRule::mean(),
        AggregationRule::krum(2, 3),
        AggregationRule::median(),
        AggregationRule::trimmed_mean(0.2),
    ];
    let names: Vec<String> = candidates.iter().map(AggregationRule::label).collect();
    println!("candidates: {}", names.join(", "));

    for mode in [
        DefenseMode::Static(1),
        DefenseMode::BlackBoxUniform,
        DefenseMode::BlackBoxWeighted,
    ] {
        let strategy = DefenseStrategy::new(mode, candidates.clone())?;
        let mut counts = vec![0usize; candidates.len()];
        let mut rng = stream(11, "defense", 0, 0);
        let mut probs = Vec::new();
        for _ in 0..2000 {
            let rec = defend_round(&strategy, &updates, &weights, Some(&trusted), &mut rng)?;
            counts[rec.rule_index] += 1;
            probs = rec.probabilities_used;
        }
        let freq: Vec<String> = counts.iter().map(|c| format!("{:.3}", *c as f64 / 2000.0)).collect();
        let p: Vec<String> = probs.iter().map(|p| format!("{p:.3}")).collect();
        println!(
            "{:<20} P=[{}] observed=[{}]",
            mode.name(),
            p.join(", "),
            freq.join(", ")
        );
    }
    Ok(())
}
