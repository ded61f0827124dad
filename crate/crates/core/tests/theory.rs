mod common;

use common::{bound_reference, eta_reference, rel_err, uv};
use fedbox::probability::sample_index;
use fedbox::rng::stream;
use fedbox::theory::{
    empirical_alpha, impact_comparison, theorem1_check, theorem2_bound, theorem2_eta, theorem2_terms, TheoryInputs,
};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

fn random_simplex<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let g = Gamma::new(0.7, 1.0).unwrap();
    let w: Vec<f64> = (0..n).map(|_| g.sample(rng) + 1e-12).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn random_inputs<R: Rng>(rng: &mut R) -> TheoryInputs {
    let k = rng.random_range(3..60);
    TheoryInputs {
        l: rng.random_range(0.01..20.0),
        g_l2: rng.random_range(0.0..10.0),
        g_g2: rng.random_range(0.0..10.0),
        k,
        h_m: rng.random_range(0..=(k - 1) / 2),
        t: rng.random_range(1..100_000),
        expected_alpha: rng.random_range(0.0..5.0),
        f0_gap: rng.random_range(0.0..10.0),
        grad0_sq: rng.random_range(0.0..10.0),
    }
}

#[test]
fn theorem1_worked_example() {
    let c = theorem1_check(&[-2.0, 2.0], &[0.4, 0.6]).unwrap();
    assert_eq!(c.threshold, 0.5);
    assert!(c.robust);
    assert!((c.expected_inner - 0.4).abs() < 1e-15);
    assert!(!theorem1_check(&[-2.0, 2.0], &[0.5, 0.5]).unwrap().robust);
    let all_good = theorem1_check(&[1.0, 3.0, 0.5], &[0.2, 0.3, 0.5]).unwrap();
    assert_eq!((all_good.threshold, all_good.robust), (0.0, true));
    let all_bad = theorem1_check(&[-1.0, 0.0], &[0.5, 0.5]).unwrap();
    assert_eq!((all_bad.threshold, all_bad.robust), (1.0, false));
}

#[test]
fn theorem1_robust_instances_have_positive_sampled_mean() {
    let mut rng = stream(40, "thm1", 0, 0);
    let mut robust = 0;
    while robust < 1000 {
        let m = rng.random_range(2..=6);
        let inner: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = random_simplex(m, &mut rng);
        if !theorem1_check(&inner, &p).unwrap().robust {
            continue;
        }
        robust += 1;
        let draws = 20_000;
        let sampled: f64 = (0..draws).map(|_| inner[sample_index(&p, &mut rng)]).sum::<f64>() / draws as f64;
        let exact: f64 = p.iter().zip(&inner).map(|(a, b)| a * b).sum();
        assert!(exact > 0.0, "{inner:?} {p:?}");
        assert!(sampled > 0.0, "sampled mean {sampled} for {inner:?} {p:?}");
    }
}

#[test]
fn eta_and_bound_match_straight_line_transcription() {
    let mut rng = stream(41, "thm2", 0, 0);
    for _ in 0..100 {
        let inputs = random_inputs(&mut rng);
        let steps = theorem2_eta(&inputs).unwrap();
        let (eta, beta) = eta_reference(&inputs);
        assert!(rel_err(steps.eta, eta) <= 1e-12, "{inputs:?}");
        assert!((steps.beta - beta).abs() <= 1e-12, "{inputs:?}");
        assert!((0.0..1.0).contains(&steps.beta) || steps.beta.abs() < 1e-12);
        assert!(
            rel_err(theorem2_bound(&inputs).unwrap(), bound_reference(&inputs)) <= 1e-12,
            "{inputs:?}"
        );
    }
}

#[test]
fn eta_reference_instance() {
    let inputs = TheoryInputs {
        l: 1.0,
        g_l2: 1.0,
        g_g2: 0.0,
        k: 10,
        h_m: 1,
        t: 1000,
        expected_alpha: 0.1,
        f0_gap: 1.0,
        grad0_sq: 0.0,
    };
    let got = theorem2_eta(&inputs).unwrap().eta;
    assert!(rel_err(got, eta_reference(&inputs).0) <= 1e-12);
    let zero_noise = TheoryInputs { g_l2: 0.0, ..inputs };
    let s = theorem2_eta(&zero_noise).unwrap();
    assert_eq!((s.eta, s.beta), (0.125, 0.0));
    let long = TheoryInputs { t: u64::MAX, ..inputs };
    let s = theorem2_eta(&long).unwrap();
    assert!(s.eta < 1e-9 && s.beta > 1.0 - 1e-8);
}

#[test]
fn bound_limit_is_the_neighbourhood_radius() {
    let mut rng = stream(42, "radius", 0, 0);
    for _ in 0..100 {
        let inputs = random_inputs(&mut rng);
        let terms = theorem2_terms(&inputs).unwrap();
        let residual = theorem2_bound(&inputs).unwrap()
            - terms.optimality_gap
            - terms.variance
            - terms.initial_gradient
            - terms.cross;
        let radius = 15.0 * inputs.expected_alpha * inputs.g_g2;
        assert!(
            (residual - radius).abs() <= 1e-9 * radius.max(1.0),
            "{residual} vs {radius}"
        );
        let far = TheoryInputs { t: u64::MAX, ..inputs };
        // the 1/sqrt(T) term is still ~1e-5 at the largest representable T
        assert!((theorem2_bound(&far).unwrap() - radius).abs() <= 1e-3 * radius.max(1.0));
    }
}

#[test]
fn homogeneous_bound_decays_as_inverse_root_t() {
    let base = TheoryInputs {
        l: 2.0,
        g_l2: 3.0,
        g_g2: 0.0,
        k: 20,
        h_m: 2,
        t: 1,
        expected_alpha: 0.7,
        f0_gap: 4.0,
        grad0_sq: 1.0,
    };
    let slow = |t: u64| {
        let terms = theorem2_terms(&TheoryInputs { t, ..base }).unwrap();
        terms.total() - terms.optimality_gap - terms.variance - terms.initial_gradient
    };
    for t in [10u64, 1000, 100_000, 10_000_000] {
        assert!((slow(4 * t) / slow(t) - 0.5).abs() < 1e-12);
    }
    let full = |t: u64| theorem2_bound(&TheoryInputs { t, ..base }).unwrap();
    let ratios: Vec<f64> = [10u64, 1000, 100_000, 10_000_000]
        .iter()
        .map(|&t| full(4 * t) / full(t))
        .collect();
    assert!(ratios.windows(2).all(|w| (w[1] - 0.5).abs() <= (w[0] - 0.5).abs()));
    assert!((ratios[3] - 0.5).abs() < 1e-3);
}

#[test]
fn impact_comparison_never_exceeds_worst_case() {
    let mut rng = stream(43, "impact", 0, 0);
    for _ in 0..10_000 {
        let attacks = rng.random_range(1..=6);
        let rules = rng.random_range(1..=6);
        let alpha: Vec<Vec<f64>> = (0..attacks)
            .map(|_| (0..rules).map(|_| rng.random_range(0.0..10.0)).collect())
            .collect();
        let p_d = random_simplex(rules, &mut rng);
        let p_a = random_simplex(attacks, &mut rng);
        let cmp = impact_comparison(&alpha, &p_d, &p_a).unwrap();
        assert!(cmp.expected <= cmp.worst_case + 1e-12);

        let per_row: Vec<f64> = alpha
            .iter()
            .map(|r| r.iter().zip(&p_d).map(|(a, p)| a * p).sum())
            .collect();
        let best = (0..attacks).fold(0, |b, i| if per_row[i] > per_row[b] { i } else { b });
        let mut point = vec![0.0; attacks];
        point[best] = 1.0;
        let tight = impact_comparison(&alpha, &p_d, &point).unwrap();
        assert_eq!(tight.expected, tight.worst_case);
    }
}

#[test]
fn impact_comparison_examples() {
    let eye = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let c = impact_comparison(&eye, &[0.5, 0.5], &[0.5, 0.5]).unwrap();
    assert_eq!((c.expected, c.worst_case), (0.5, 0.5));
    let c = impact_comparison(&[vec![2.0, 0.0], vec![0.0, 1.0]], &[0.5, 0.5], &[0.5, 0.5]).unwrap();
    assert_eq!((c.expected, c.worst_case), (0.75, 1.0));
    assert!(impact_comparison(&eye, &[0.7, 0.7], &[0.5, 0.5]).is_err());
}

proptest! {
    #[test]
    fn bound_grows_with_expected_alpha(seed in any::<u64>(), a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let inputs = random_inputs(&mut stream(seed, "mono", 0, 0));
        let (lo, hi) = (a.min(b), a.max(b));
        let at = |e: f64| theorem2_bound(&TheoryInputs { expected_alpha: e, ..inputs }).unwrap();
        prop_assert!(at(lo) <= at(hi));
    }

    #[test]
    fn alpha_is_scale_invariant(
        honest in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..6),
        q in prop::collection::vec(-5.0f64..5.0, 3),
        c in 0.01f64..100.0,
    ) {
        let ups: Vec<_> = honest.iter().map(|r| uv(r)).collect();
        let scaled: Vec<_> = honest.iter().map(|r| uv(&r.iter().map(|v| v * c).collect::<Vec<_>>())).collect();
        let a = empirical_alpha(&ups, &uv(&q)).unwrap();
        let b = empirical_alpha(&scaled, &uv(&q.iter().map(|v| v * c).collect::<Vec<_>>())).unwrap();
        match (a.alpha_hat, b.alpha_hat) {
            (Some(x), Some(y)) => prop_assert!(rel_err(x, y) < 1e-9),
            (x, y) => prop_assert_eq!(x.is_none(), y.is_none()),
        }
    }
}
