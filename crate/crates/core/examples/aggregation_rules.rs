//! Compare the five aggregation rules on a round with two colluding outliers.

use fedbox::{AggregationRule, UpdateVector};

fn main() -> fedbox::Result<()> {
    let mut updates: Vec<UpdateVector> = (0..9)
        .map(|i| {
            let t = i as f64 * 0.1;
            UpdateVector::new(vec![1.0 + t, -0.5 + 0.5 * t, 0.2 - t])
        })
        .collect::<Result<_, _>>()?;
    for _ in 0..2 {
        updates.push(UpdateVector::new(vec![-30.0, 40.0, 25.0])?);
    }
    let weights = vec![1.0; updates.len()];
    let h = 2;
    let rules = [
        AggregationRule::mean(),
        AggregationRule::krum(h, 3),
        AggregationRule::median(),
        AggregationRule::trimmed_mean(0.2),
        AggregationRule::bulyan(h),
    ];
    println!("{} updates, {h} of them malicious", updates.len());
    for rule in &rules {
        let agg = rule.aggregate(&updates, Some(&weights))?;
        let chosen = rule
            .selected(&updates)?
            .map(|s| format!("  selected {s:?}"))
            .unwrap_or_default();
        println!(
            "{:<24} {:>8.4} {:>8.4} {:>8.4}{chosen}",
            rule.label(),
            agg[0],
            agg[1],
            agg[2]
        );
    }
    Ok(())
}
