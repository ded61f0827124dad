//! Craft every attack against one set of benign updates and measure how far
//! each pushes the aggregate of a median and a Krum server.

use fedbox::attacks::{craft_updates, lie_default_z};
use fedbox::rng::stream;
use fedbox::theory::empirical_alpha;
use fedbox::{AggregationRule, AttackKind, AttackSpec, UpdateVector};
use rand_distr::{Distribution, Normal};

fn main() -> fedbox::Result<()> {
    let mut rng = stream(7, "example", 0, 0);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let benign: Vec<UpdateVector> = (0..16)
        .map(|_| UpdateVector::new((0..8).map(|j| 0.1 * j as f64 + noise.sample(&mut rng)).collect()))
        .collect::<Result<_, _>>()?;
    let (n_total, n_mal) = (20, 4);
    println!("lie z for {n_mal} of {n_total}: {:.4}", lie_default_z(n_total, n_mal)?);

    let servers = [AggregationRule::median(), AggregationRule::krum(n_mal, 1)];
    println!("{:<10} {:>14} {:>14}", "attack", "alpha(median)", "alpha(krum)");
    for kind in [AttackKind::Gaussian, AttackKind::Lie, AttackKind::Fang, AttackKind::She] {
        let mut row = format!("{:<10}", kind.name());
        for server in &servers {
            let spec = AttackSpec::new(kind).targeting(*server);
            let crafted = craft_updates(&spec, &benign, n_total, n_mal, &mut stream(7, "attack", 0, 0))?;
            let pool: Vec<UpdateVector> = crafted.into_iter().chain(benign.iter().cloned()).collect();
            let est = empirical_alpha(&benign, &server.aggregate(&pool, None)?)?;
            row += &format!(" {:>14.4}", est.alpha_hat.unwrap_or(f64::NAN));
        }
        println!("{row}");
    }
    Ok(())
}
