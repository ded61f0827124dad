//! Malicious update generation.
//!
//! AGR-agnostic attacks (Gaussian, label flipping, Lie) need no knowledge of
//! the server. AGR-adaptive attacks (Fang, She) are crafted against a target
//! rule and therefore depend on what the adversary believes the server runs.
//! Colluding attacks return one vector per malicious client, all identical.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::aggregation::{AggregationRule, RuleKind};
use crate::error::{invalid, Error, Result};
use crate::probability;
use crate::theory::empirical_alpha;
use crate::vector::{axpy, mean_of, norm, std_of, UpdateVector};

pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    Gaussian,
    LabelFlip,
    Lie,
    Fang,
    She,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Gaussian => "gaussian",
            AttackKind::LabelFlip => "label_flip",
            AttackKind::Lie => "lie",
            AttackKind::Fang => "fang",
            AttackKind::She => "she",
        }
    }

    /// Whether the attack is crafted against a specific rule.
    pub fn is_adaptive(self) -> bool {
        matches!(self, AttackKind::Fang | AttackKind::She)
    }
}

/// Perturbation direction used by the She attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `-sign(mean)`
    #[default]
    NegSign,
    /// `-std` of the benign updates, coordinate-wise
    NegStd,
    /// `-mean / |mean|`
    NegUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub target_rule: Option<AggregationRule>,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub z_override: Option<f64>,
}

fn default_sigma() -> f64 {
    DEFAULT_GAUSSIAN_SIGMA
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            sigma: DEFAULT_GAUSSIAN_SIGMA,
            target_rule: None,
            perturbation: Perturbation::NegSign,
            z_override: None,
        }
    }

    pub fn targeting(mut self, rule: AggregationRule) -> Self {
        self.target_rule = Some(rule);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if self.kind.is_adaptive() && self.target_rule.is_none() {
            return Err(invalid(
                "target_rule",
                format!("{} requires a target rule", self.kind.name()),
            ));
        }
        if let Some(z) = self.z_override {
            if !z.is_finite() {
                return Err(invalid("z_override", "must be finite"));
            }
        }
        Ok(())
    }
}

/// What the server lets the adversary see.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    WhiteBoxStatic,
    WhiteBoxDynamic,
    BlackBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryKnowledge {
    pub visibility: Visibility,
    pub known_candidate_set: Option<Vec<AggregationRule>>,
    /// `impact_matrix[i][j]`: impact of attack `i` on rule `j`.
    pub impact_matrix: Option<Vec<Vec<f64>>>,
    /// The adversary's own mixed strategy over attacks.
    pub attack_distribution: Option<Vec<f64>>,
}

impl AdversaryKnowledge {
    pub fn black_box() -> Self {
        Self {
            visibility: Visibility::BlackBox,
            known_candidate_set: None,
            impact_matrix: None,
            attack_distribution: None,
        }
    }

    pub fn white_box(visibility: Visibility, candidates: Vec<AggregationRule>) -> Self {
        Self {
            visibility,
            known_candidate_set: Some(candidates),
            impact_matrix: None,
            attack_distribution: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.visibility != Visibility::BlackBox && self.known_candidate_set.is_none() {
            return Err(invalid(
                "known_candidate_set",
                "white-box adversaries know the candidate set",
            ));
        }
        if let Some(p) = &self.attack_distribution {
            probability::validate(p)?;
        }
        if let Some(m) = &self.impact_matrix {
            let cols = m.first().map(Vec::len).unwrap_or(0);
            if m.is_empty() || m.iter().any(|r| r.len() != cols || r.iter().any(|v| !v.is_finite())) {
                return Err(invalid(
                    "impact_matrix",
                    "must be a non-empty finite rectangular matrix",
                ));
            }
        }
        Ok(())
    }
}

/// `count` vectors of i.i.d. `N(0, sigma^2)` entries.
pub fn attack_gaussian<R: Rng + ?Sized>(
    dimension: usize,
    count: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<UpdateVector>> {
    if dimension == 0 {
        return Err(invalid("dimension", "must be >= 1"));
    }
    if count == 0 {
        return Err(invalid("count", "must be >= 1"));
    }
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(invalid(
            "sigma",
            format!("must be finite and non-negative, got {sigma}"),
        ));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| invalid("sigma", format!("{e} (got {sigma})")))?;
    Ok((0..count)
        .map(|_| UpdateVector::from_raw((0..dimension).map(|_| normal.sample(rng)).collect()))
        .collect())
}

/// Maps class `c` to `num_classes - 1 - c` (zero-based labels).
pub fn attack_label_flip(label: usize, num_classes: usize) -> Result<usize> {
    if label >= num_classes {
        return Err(Error::LabelOutOfRange { label, num_classes });
    }
    Ok(num_classes - 1 - label)
}

const LIE_PSI_CLAMP: f64 = 1e-6;

/// Default Lie scaling `z = Phi^-1(psi)` from the supporter count
/// `s = floor(n/2 + 1) - m` and `psi = (n - m - s) / (n - m)`.
pub fn lie_default_z(n_total: usize, n_malicious: usize) -> Result<f64> {
    if n_malicious == 0 || n_malicious >= n_total {
        return Err(invalid("n_malicious", format!("need 0 < {n_malicious} < {n_total}")));
    }
    let n = n_total as f64;
    let m = n_malicious as f64;
    let s = (n / 2.0 + 1.0).floor() - m;
    let psi = ((n - m - s) / (n - m)).clamp(LIE_PSI_CLAMP, 1.0 - LIE_PSI_CLAMP);
    let normal = StdNormal::standard();
    Ok(normal.inverse_cdf(psi))
}

/// Lie ("a little is enough"): `mean + z * std` of the benign updates.
pub fn attack_lie(
    benign_updates: &[UpdateVector],
    n_total: usize,
    n_malicious: usize,
    z_override: Option<f64>,
) -> Result<UpdateVector> {
    let mean = mean_of(benign_updates)?;
    let z = match z_override {
        Some(z) => z,
        None => lie_default_z(n_total, n_malicious)?,
    };
    let std = std_of(benign_updates)?;
    Ok(UpdateVector::from_raw(axpy(&mean, z, &std)))
}

/// Output of an optimised (Fang / She) attack.
#[derive(Debug, Clone, PartialEq)]
pub struct CraftedAttack {
    pub updates: Vec<UpdateVector>,
    pub z: f64,
    pub direction: UpdateVector,
    /// False when the search exhausted its budget without success.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FangParams {
    pub z_start: f64,
    pub max_iterations: usize,
    /// Minimum movement along `w`, relative to `|mean - AGR(benign)|`.
    pub threshold_ratio: f64,
}

impl Default for FangParams {
    fn default() -> Self {
        Self {
            z_start: 10.0,
            max_iterations: 30,
            threshold_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SheParams {
    pub z_max: f64,
    /// Search stops once the step falls below half of this.
    pub tolerance: f64,
}

impl Default for SheParams {
    fn default() -> Self {
        Self {
            z_max: 10.0,
            tolerance: 1e-3,
        }
    }
}

fn neg_sign(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&x| {
            if x > 0.0 {
                -1.0
            } else if x < 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `n_malicious` copies of `malicious` followed by the benign updates.
/// Malicious clients hold the lowest indices in the upload order.
fn with_malicious(benign: &[UpdateVector], malicious: &[f64], n_malicious: usize) -> Vec<UpdateVector> {
    let bad = UpdateVector::from_raw(malicious.to_vec());
    std::iter::repeat_n(bad, n_malicious)
        .chain(benign.iter().cloned())
        .collect()
}

fn check_adaptive_inputs(benign: &[UpdateVector], target: &AggregationRule, n_malicious: usize) -> Result<()> {
    if benign.is_empty() {
        return Err(Error::EmptyInput);
    }
    if n_malicious == 0 {
        return Err(invalid("n_malicious", "must be >= 1"));
    }
    target.check_inputs(benign.len() + n_malicious)
}

/// Whether malicious copies placed at `candidate` get past `target`.
struct Survival<'a> {
    benign: &'a [UpdateVector],
    target: &'a AggregationRule,
    n_malicious: usize,
    mean: &'a [f64],
    direction: &'a [f64],
    baseline: Vec<f64>,
    threshold: f64,
}

impl Survival<'_> {
    fn survives(&self, candidate: &[f64]) -> Result<bool> {
        let pool = with_malicious(self.benign, candidate, self.n_malicious);
        if let Some(selected) = self.target.selected(&pool)? {
            return Ok(selected.iter().any(|&i| i < self.n_malicious));
        }
        let agg = self.target.aggregate(&pool, None)?;
        let shift: Vec<f64> = agg.iter().zip(&self.baseline).map(|(a, b)| a - b).collect();
        let movement = crate::vector::dot(&shift, self.direction) / norm(self.direction);
        Ok(movement > 0.0 && movement >= self.threshold)
    }
}

/// Fang attack: `mean + z * w` with `w = -sign(mean)`, `z` halved from
/// `z_start` until the crafted vector survives `target`.
pub fn attack_fang(
    benign_updates: &[UpdateVector],
    target: &AggregationRule,
    n_malicious: usize,
) -> Result<CraftedAttack> {
    attack_fang_with(benign_updates, target, n_malicious, &FangParams::default())
}

pub fn attack_fang_with(
    benign_updates: &[UpdateVector],
    target: &AggregationRule,
    n_malicious: usize,
    params: &FangParams,
) -> Result<CraftedAttack> {
    check_adaptive_inputs(benign_updates, target, n_malicious)?;
    let mean = mean_of(benign_updates)?;
    let w = neg_sign(&mean);
    if w.iter().all(|&x| x == 0.0) {
        return Ok(CraftedAttack {
            updates: vec![mean.clone(); n_malicious],
            z: 0.0,
            direction: UpdateVector::from_raw(w),
            converged: true,
        });
    }
    let baseline = target
        .aggregate(benign_updates, None)
        .map(UpdateVector::into_values)
        .unwrap_or_else(|_| mean.values().to_vec());
    let threshold = params.threshold_ratio * crate::vector::sq_dist(&mean, &baseline).sqrt();
    let survival = Survival {
        benign: benign_updates,
        target,
        n_malicious,
        mean: &mean,
        direction: &w,
        baseline,
        threshold,
    };

    let mut z = params.z_start;
    let mut converged = false;
    for i in 0..params.max_iterations.max(1) {
        if i > 0 {
            z /= 2.0;
        }
        if survival.survives(&axpy(survival.mean, z, &w))? {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("fang search against {} exhausted; using z = {z:e}", target.label());
    }
    let bad = UpdateVector::from_raw(axpy(&mean, z, &w));
    Ok(CraftedAttack {
        updates: vec![bad; n_malicious],
        z,
        direction: UpdateVector::from_raw(w),
        converged,
    })
}

/// The She perturbation direction for the given benign updates.
pub fn she_direction(benign_updates: &[UpdateVector], perturbation: Perturbation) -> Result<Vec<f64>> {
    let mean = mean_of(benign_updates)?;
    Ok(match perturbation {
        Perturbation::NegSign => neg_sign(&mean),
        Perturbation::NegStd => std_of(benign_updates)?.iter().map(|s| -s).collect(),
        Perturbation::NegUnit => {
            let n = mean.norm();
            if n == 0.0 {
                return Err(Error::UndefinedDirection);
            }
            mean.iter().map(|v| -v / n).collect()
        }
    })
}

/// She objective: distance of the aggregate from the benign mean when the
/// malicious clients upload `mean + z * w`.
pub fn she_objective(
    benign_updates: &[UpdateVector],
    target: &AggregationRule,
    n_malicious: usize,
    mean: &[f64],
    direction: &[f64],
    z: f64,
) -> Result<f64> {
    let pool = with_malicious(benign_updates, &axpy(mean, z, direction), n_malicious);
    let agg = target.aggregate(&pool, None)?;
    Ok(crate::vector::sq_dist(&agg, mean).sqrt())
}

/// She attack: `mean + z * w`, with `z` chosen in `[0, z_max]` to maximise the
/// aggregate's deviation from the benign mean.
///
/// Against selection rules (Krum, Bulyan) the search bisects for the largest
/// `z` at which a malicious copy is still selected. Against coordinate-wise
/// rules it moves `z` up after every strict improvement of the objective and
/// down otherwise. Both halve the step until it drops below half the tolerance.
pub fn attack_she(
    benign_updates: &[UpdateVector],
    target: &AggregationRule,
    perturbation: Perturbation,
    n_malicious: usize,
) -> Result<CraftedAttack> {
    attack_she_with(benign_updates, target, perturbation, n_malicious, &SheParams::default())
}

pub fn attack_she_with(
    benign_updates: &[UpdateVector],
    target: &AggregationRule,
    perturbation: Perturbation,
    n_malicious: usize,
    params: &SheParams,
) -> Result<CraftedAttack> {
    check_adaptive_inputs(benign_updates, target, n_malicious)?;
    let mean = mean_of(benign_updates)?;
    let w = she_direction(benign_updates, perturbation)?;
    if w.iter().all(|&x| x == 0.0) {
        return Ok(CraftedAttack {
            updates: vec![mean.clone(); n_malicious],
            z: 0.0,
            direction: UpdateVector::from_raw(w),
            converged: true,
        });
    }
    let objective = |z: f64| she_objective(benign_updates, target, n_malicious, &mean, &w, z);
    let selected = |z: f64| -> Result<Option<bool>> {
        let pool = with_malicious(benign_updates, &axpy(&mean, z, &w), n_malicious);
        Ok(target.selected(&pool)?.map(|s| s.iter().any(|&i| i < n_malicious)))
    };

    let z_best = if selected(params.z_max)?.is_some() {
        // selection rules: largest z whose copies are still selected, unless
        // the fully filtered end deviates further
        let mut z_succ = 0.0;
        if selected(params.z_max)? == Some(true) {
            z_succ = params.z_max;
        } else {
            let mut z = params.z_max / 2.0;
            let mut step = params.z_max / 4.0;
            while step >= params.tolerance / 2.0 {
                if selected(z)? == Some(true) {
                    z_succ = f64::max(z_succ, z);
                    z += step;
                } else {
                    z -= step;
                }
                step /= 2.0;
            }
        }
        if objective(params.z_max)? > objective(z_succ)? {
            params.z_max
        } else {
            z_succ
        }
    } else {
        let mut best = objective(0.0)?;
        let mut z_best = 0.0;
        let mut z = params.z_max / 2.0;
        let mut step = params.z_max / 4.0;
        // the upper end is probed first so monotone objectives reach it
        let top = objective(params.z_max)?;
        if top > best {
            best = top;
            z_best = params.z_max;
        }
        while step >= params.tolerance / 2.0 {
            let value = objective(z)?;
            if value > best {
                best = value;
                z_best = z;
                z += step;
            } else {
                z -= step;
            }
            z = z.clamp(0.0, params.z_max);
            step /= 2.0;
        }
        z_best
    };
    let bad = UpdateVector::from_raw(axpy(&mean, z_best, &w));
    Ok(CraftedAttack {
        updates: vec![bad; n_malicious],
        z: z_best,
        direction: UpdateVector::from_raw(w),
        converged: z_best > 0.0,
    })
}

/// Index of the attack with the highest expected impact under the defense
/// distribution, `argmax_i sum_j P_d[j] * alpha[i][j]`; ties go to the lowest index.
pub fn adversary_select_attack(knowledge: &AdversaryKnowledge, defense_distribution: &[f64]) -> Result<usize> {
    let matrix = knowledge.impact_matrix.as_ref().ok_or(Error::MissingImpactMatrix)?;
    knowledge.validate()?;
    probability::validate(defense_distribution)?;
    if matrix[0].len() != defense_distribution.len() {
        return Err(Error::LengthMismatch {
            what: "defense distribution",
            expected: matrix[0].len(),
            got: defense_distribution.len(),
        });
    }
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, row) in matrix.iter().enumerate() {
        let value = probability::expectation(defense_distribution, row);
        if value > best_value {
            best = i;
            best_value = value;
        }
    }
    Ok(best)
}

/// Colluding malicious vectors for a non-training attack. Label flipping is
/// handled by the caller since it needs local training on poisoned data.
pub fn craft_updates<R: Rng + ?Sized>(
    spec: &AttackSpec,
    benign_updates: &[UpdateVector],
    n_total: usize,
    n_malicious: usize,
    rng: &mut R,
) -> Result<Vec<UpdateVector>> {
    spec.validate()?;
    match spec.kind {
        AttackKind::Gaussian => {
            let dim = benign_updates.first().ok_or(Error::EmptyInput)?.dim();
            attack_gaussian(dim, n_malicious, spec.sigma, rng)
        }
        AttackKind::Lie => {
            let v = attack_lie(benign_updates, n_total, n_malicious, spec.z_override)?;
            Ok(vec![v; n_malicious])
        }
        AttackKind::Fang => {
            let target = spec.target_rule.as_ref().expect("validated");
            Ok(attack_fang(benign_updates, target, n_malicious)?.updates)
        }
        AttackKind::She => {
            let target = spec.target_rule.as_ref().expect("validated");
            Ok(attack_she(benign_updates, target, spec.perturbation, n_malicious)?.updates)
        }
        AttackKind::LabelFlip => Err(invalid("kind", "label flipping is produced by local training")),
    }
}

/// The adversary's local experiment: impact of an attack crafted against
/// `targets[i]` on `rules[j]`, measured as the empirical robustness
/// coefficient against the visible benign updates. Undefined coefficients
/// fall back to the squared deviation.
pub fn estimate_impact_matrix(
    kind: AttackKind,
    perturbation: Perturbation,
    benign_updates: &[UpdateVector],
    targets: &[AggregationRule],
    rules: &[AggregationRule],
    n_malicious: usize,
) -> Result<Vec<Vec<f64>>> {
    targets
        .iter()
        .map(|target| {
            let crafted = match kind {
                AttackKind::Fang => attack_fang(benign_updates, target, n_malicious)?,
                AttackKind::She => attack_she(benign_updates, target, perturbation, n_malicious)?,
                other => {
                    return Err(invalid("kind", format!("{} is not rule-targeted", other.name())));
                }
            };
            let pool: Vec<UpdateVector> = crafted
                .updates
                .iter()
                .cloned()
                .chain(benign_updates.iter().cloned())
                .collect();
            rules
                .iter()
                .map(|rule| {
                    let q = rule.aggregate(&pool, None)?;
                    let est = empirical_alpha(benign_updates, &q)?;
                    Ok(est.alpha_hat.unwrap_or(est.deviation_sq))
                })
                .collect()
        })
        .collect()
}

/// Name of a rule-targeted attack, e.g. `fang-krum`.
pub fn targeted_label(kind: AttackKind, target: Option<&AggregationRule>) -> String {
    match target {
        Some(rule) if kind.is_adaptive() => format!("{}-{}", kind.name(), rule_short(rule.kind)),
        _ => kind.name().to_string(),
    }
}

fn rule_short(kind: RuleKind) -> &'static str {
    match kind {
        RuleKind::TrimmedMean => "trmean",
        k => k.name(),
    }
}
