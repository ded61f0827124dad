//! Evaluable forms of the robustness definition and of the robustness and
//! convergence results for randomised (dynamic) defenses.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::probability;
use crate::vector::{mean_of, sq_dist, UpdateVector};

/// Empirical `(h, alpha)` robustness of one aggregate against the honest inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessEstimate {
    /// `|Q - V̄|^2 * |N| / sum_i |V_i - V̄|^2`; `None` when the honest inputs
    /// have zero spread but the aggregate deviates from them.
    pub alpha_hat: Option<f64>,
    /// `<Q, V̄>`
    pub inner_product: f64,
    pub condition_i_holds: bool,
    /// `|Q - V̄|^2`
    pub deviation_sq: f64,
}

impl RobustnessEstimate {
    pub fn is_undefined(&self) -> bool {
        self.alpha_hat.is_none()
    }
}

pub fn empirical_alpha(honest_updates: &[UpdateVector], aggregate: &UpdateVector) -> Result<RobustnessEstimate> {
    let mean = mean_of(honest_updates)?;
    if aggregate.dim() != mean.dim() {
        return Err(Error::DimensionMismatch {
            expected: mean.dim(),
            got: aggregate.dim(),
        });
    }
    let spread: f64 = honest_updates.iter().map(|v| sq_dist(v, &mean)).sum();
    let deviation_sq = sq_dist(aggregate, &mean);
    let alpha_hat = if spread > 0.0 {
        Some(deviation_sq * honest_updates.len() as f64 / spread)
    } else if deviation_sq == 0.0 {
        Some(0.0)
    } else {
        None
    };
    let inner_product = aggregate.dot(&mean);
    Ok(RobustnessEstimate {
        alpha_hat,
        inner_product,
        condition_i_holds: inner_product > 0.0,
        deviation_sq,
    })
}

/// Outcome of the probability-mass robustness condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Check {
    pub threshold: f64,
    pub robust: bool,
    /// `E_{i~P} <Q_i, V̄>`
    pub expected_inner: f64,
    /// Number of broken rules (inner product <= 0).
    pub broken: usize,
}

/// Rules with `<Q_j, V̄> <= 0` form the broken set. The strategy is robust when
/// the mass on the remaining rules exceeds
/// `sup|<Q_j,V̄>| / (sup|<Q_j,V̄>| + inf <Q_i,V̄>)`.
pub fn theorem1_check(inner_products: &[f64], p: &[f64]) -> Result<Theorem1Check> {
    if inner_products.len() != p.len() {
        return Err(Error::LengthMismatch {
            what: "probabilities",
            expected: inner_products.len(),
            got: p.len(),
        });
    }
    probability::validate(p)?;
    if let Some(&v) = inner_products.iter().find(|v| !v.is_finite()) {
        return Err(invalid("inner_products", format!("non-finite value {v}")));
    }
    let expected_inner = probability::expectation(p, inner_products);
    let broken: Vec<usize> = (0..p.len()).filter(|&i| inner_products[i] <= 0.0).collect();
    if broken.is_empty() {
        return Ok(Theorem1Check {
            threshold: 0.0,
            robust: true,
            expected_inner,
            broken: 0,
        });
    }
    if broken.len() == p.len() {
        return Ok(Theorem1Check {
            threshold: 1.0,
            robust: false,
            expected_inner,
            broken: broken.len(),
        });
    }
    let sup_broken = broken.iter().map(|&j| inner_products[j].abs()).fold(0.0, f64::max);
    let (inf_good, good_mass) = (0..p.len())
        .filter(|&i| inner_products[i] > 0.0)
        .fold((f64::INFINITY, 0.0), |(inf, mass), i| {
            (inf.min(inner_products[i]), mass + p[i])
        });
    let threshold = sup_broken / (sup_broken + inf_good);
    let robust = good_mass > threshold;
    debug_assert!(
        !robust || expected_inner > 0.0,
        "robust condition must imply positive expectation"
    );
    Ok(Theorem1Check {
        threshold,
        robust,
        expected_inner,
        broken: broken.len(),
    })
}

/// Constants of the convergence bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Smoothness constant L.
    pub l: f64,
    /// Local stochastic-gradient variance bound.
    pub g_l2: f64,
    /// Heterogeneity bound.
    pub g_g2: f64,
    /// Sampled clients per round.
    pub k: usize,
    /// Maximum Byzantine clients per round.
    pub h_m: usize,
    /// Rounds.
    pub t: u64,
    /// `E_{i~P}[alpha_i]`
    pub expected_alpha: f64,
    /// `F(x0) - F*`
    pub f0_gap: f64,
    /// `|grad F(x0)|^2`
    pub grad0_sq: f64,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        let reals = [
            ("l", self.l),
            ("g_l2", self.g_l2),
            ("g_g2", self.g_g2),
            ("expected_alpha", self.expected_alpha),
            ("f0_gap", self.f0_gap),
            ("grad0_sq", self.grad0_sq),
        ];
        for (name, v) in reals {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        if self.l <= 0.0 {
            return Err(invalid("l", "must be positive"));
        }
        if 2 * self.h_m >= self.k {
            return Err(invalid(
                "h_m",
                format!("need h_m < K/2 (h_m={}, K={})", self.h_m, self.k),
            ));
        }
        if self.t == 0 {
            return Err(invalid("t", "must be >= 1"));
        }
        Ok(())
    }

    fn honest(&self) -> f64 {
        (self.k - self.h_m) as f64
    }

    /// `32 L (F(x0) - F*) + (6 + 10/(K - h_m)) G_l^2 + 7 G_g^2`
    fn numerator_term(&self) -> f64 {
        32.0 * self.l * self.f0_gap + (6.0 + 10.0 / self.honest()) * self.g_l2 + 7.0 * self.g_g2
    }

    /// `80 L (G_l^2/(K - h_m) + G_g^2) + 240 L E[alpha] G_l^2`
    fn noise_term(&self) -> f64 {
        80.0 * self.l * (self.g_l2 / self.honest() + self.g_g2) + 240.0 * self.l * self.expected_alpha * self.g_l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub eta: f64,
    pub beta: f64,
}

/// Learning rate and momentum parameter of the convergence result.
pub fn theorem2_eta(inputs: &TheoryInputs) -> Result<StepSizes> {
    inputs.validate()?;
    let cap = 1.0 / (8.0 * inputs.l);
    let denominator = 8.0 * inputs.l * inputs.t as f64 * inputs.noise_term();
    let eta = if denominator > 0.0 {
        (inputs.numerator_term() / denominator).sqrt().min(cap)
    } else {
        cap
    };
    let beta = 1.0 - 8.0 * inputs.l * eta;
    debug_assert!((0.0..1.0).contains(&beta) || beta.abs() < 1e-15);
    Ok(StepSizes {
        eta,
        beta: beta.max(0.0),
    })
}

/// Individual terms of the averaged squared-gradient-norm bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub optimality_gap: f64,
    pub variance: f64,
    pub initial_gradient: f64,
    /// `15 E[alpha] G_g^2`, the neighbourhood radius as T grows.
    pub radius: f64,
    pub cross: f64,
}

impl BoundTerms {
    pub fn total(&self) -> f64 {
        self.optimality_gap + self.variance + self.initial_gradient + self.radius + self.cross
    }
}

pub fn theorem2_terms(inputs: &TheoryInputs) -> Result<BoundTerms> {
    inputs.validate()?;
    let t = inputs.t as f64;
    let l = inputs.l;
    let honest = inputs.honest();
    let cross_inner =
        640.0 * l * l * (inputs.g_l2 / honest + inputs.g_g2) + 1920.0 * l * l * inputs.expected_alpha * inputs.g_l2;
    Ok(BoundTerms {
        optimality_gap: 32.0 * l * inputs.f0_gap / t,
        variance: (6.0 / honest * inputs.g_l2 + 3.0 * inputs.g_g2) / t,
        initial_gradient: 2.0 * inputs.grad0_sq / t,
        radius: 15.0 * inputs.expected_alpha * inputs.g_g2,
        cross: inputs.numerator_term().sqrt() * (cross_inner / t).sqrt(),
    })
}

/// Right-hand side of the convergence bound.
pub fn theorem2_bound(inputs: &TheoryInputs) -> Result<f64> {
    Ok(theorem2_terms(inputs)?.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactComparison {
    /// `E_{i~P_a} E_{j~P_d} alpha[i][j]`
    pub expected: f64,
    /// `max_i E_{j~P_d} alpha[i][j]`
    pub worst_case: f64,
}

/// Attack impact under the adversary's mixed strategy versus its best response.
pub fn impact_comparison(alpha: &[Vec<f64>], p_d: &[f64], p_a: &[f64]) -> Result<ImpactComparison> {
    probability::validate(p_d)?;
    probability::validate(p_a)?;
    if alpha.len() != p_a.len() {
        return Err(Error::LengthMismatch {
            what: "attack distribution",
            expected: alpha.len(),
            got: p_a.len(),
        });
    }
    if let Some(row) = alpha.iter().find(|r| r.len() != p_d.len()) {
        return Err(Error::LengthMismatch {
            what: "impact matrix row",
            expected: p_d.len(),
            got: row.len(),
        });
    }
    let per_attack: Vec<f64> = alpha.iter().map(|row| probability::expectation(p_d, row)).collect();
    let expected = probability::expectation(p_a, &per_attack);
    let worst_case = per_attack.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(
        expected <= worst_case + 1e-12,
        "expected {expected} exceeds worst case {worst_case}"
    );
    Ok(ImpactComparison { expected, worst_case })
}

/// Expected robustness coefficient of a randomised strategy, `sum_j P[j] * alpha_j`.
pub fn expected_alpha(p: &[f64], alphas: &[f64]) -> Result<f64> {
    if p.len() != alphas.len() {
        return Err(Error::LengthMismatch {
            what: "alphas",
            expected: p.len(),
            got: alphas.len(),
        });
    }
    Ok(probability::expectation(p, alphas))
}

/// Human-readable block summarising the bound for a set of inputs.
pub fn report(inputs: &TheoryInputs) -> Result<String> {
    let steps = theorem2_eta(inputs)?;
    let terms = theorem2_terms(inputs)?;
    Ok(format!(
        "[theory]\n\
         L = {}\nG_l^2 = {}\nG_g^2 = {}\nK = {}\nh_m = {}\nT = {}\nE[alpha] = {}\n\
         eta = {:.6e}\nbeta = {:.6}\n\
         bound = {:.6e}\n  gap/T = {:.6e}\n  variance/T = {:.6e}\n  grad0/T = {:.6e}\n  radius = {:.6e}\n  cross = {:.6e}\n",
        inputs.l,
        inputs.g_l2,
        inputs.g_g2,
        inputs.k,
        inputs.h_m,
        inputs.t,
        inputs.expected_alpha,
        steps.eta,
        steps.beta,
        terms.total(),
        terms.optimality_gap,
        terms.variance,
        terms.initial_gradient,
        terms.radius,
        terms.cross,
    ))
}
