//! Server defense strategies: a fixed rule, or a rule sampled every round
//! from a candidate set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationRule;
use crate::attacks::{AdversaryKnowledge, Visibility};
use crate::error::{invalid, Error, Result};
use crate::probability;
use crate::vector::{check_uniform, cosine, UpdateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseMode {
    Static(usize),
    WhiteBoxDynamic,
    BlackBoxUniform,
    BlackBoxWeighted,
}

impl DefenseMode {
    pub fn name(self) -> &'static str {
        match self {
            DefenseMode::Static(_) => "static",
            DefenseMode::WhiteBoxDynamic => "white_box_dynamic",
            DefenseMode::BlackBoxUniform => "black_box_uniform",
            DefenseMode::BlackBoxWeighted => "black_box_weighted",
        }
    }

    /// What a server running this mode reveals to clients.
    pub fn visibility(self) -> Visibility {
        match self {
            DefenseMode::Static(_) => Visibility::WhiteBoxStatic,
            DefenseMode::WhiteBoxDynamic => Visibility::WhiteBoxDynamic,
            DefenseMode::BlackBoxUniform | DefenseMode::BlackBoxWeighted => Visibility::BlackBox,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseStrategy {
    mode: DefenseMode,
    candidates: Vec<AggregationRule>,
    distribution: Vec<f64>,
}

impl DefenseStrategy {
    pub fn new(mode: DefenseMode, candidates: Vec<AggregationRule>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(invalid("candidates", "candidate set must be non-empty"));
        }
        let distribution = match mode {
            DefenseMode::Static(i) => {
                if i >= candidates.len() {
                    return Err(invalid(
                        "static_index",
                        format!("{i} out of range for {} candidates", candidates.len()),
                    ));
                }
                probability::point_mass(candidates.len(), i)
            }
            _ => probability::uniform(candidates.len()),
        };
        Ok(Self {
            mode,
            candidates,
            distribution,
        })
    }

    pub fn fixed(rule: AggregationRule) -> Self {
        Self::new(DefenseMode::Static(0), vec![rule]).expect("single candidate")
    }

    pub fn mode(&self) -> DefenseMode {
        self.mode
    }

    pub fn candidates(&self) -> &[AggregationRule] {
        &self.candidates
    }

    pub fn distribution(&self) -> &[f64] {
        &self.distribution
    }

    /// Adversary knowledge permitted by this strategy. Black-box modes reveal
    /// nothing about the candidate set or the distribution.
    pub fn adversary_view(&self) -> AdversaryKnowledge {
        match self.mode.visibility() {
            Visibility::BlackBox => AdversaryKnowledge::black_box(),
            v => AdversaryKnowledge::white_box(v, self.candidates.clone()),
        }
    }
}

/// Draws a candidate index from the strategy's distribution.
pub fn sample_rule<R: Rng + ?Sized>(strategy: &DefenseStrategy, rng: &mut R) -> usize {
    match strategy.mode {
        DefenseMode::Static(i) => i,
        _ => probability::sample_index(&strategy.distribution, rng),
    }
}

/// `p_j ∝ max(0, cos(R_j, Δ0))`, uniform when every clipped similarity is zero.
pub fn weighted_probs(candidate_results: &[UpdateVector], trusted_update: &UpdateVector) -> Result<Vec<f64>> {
    let dim = check_uniform(candidate_results)?;
    if trusted_update.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: trusted_update.dim(),
        });
    }
    if trusted_update.norm() == 0.0 {
        return Err(Error::ZeroTrustedUpdate);
    }
    let sims: Vec<f64> = candidate_results
        .iter()
        .map(|r| cosine(r, trusted_update).max(0.0))
        .collect();
    let total: f64 = sims.iter().sum();
    if total <= 0.0 {
        return Ok(probability::uniform(sims.len()));
    }
    Ok(sims.iter().map(|s| s / total).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundAggregationRecord {
    pub rule_index: usize,
    /// Every candidate's aggregate (weighted mode only).
    pub candidate_results: Option<Vec<UpdateVector>>,
    pub chosen_aggregate: UpdateVector,
    pub probabilities_used: Vec<f64>,
}

/// Runs one round of server aggregation.
pub fn defend_round<R: Rng + ?Sized>(
    strategy: &DefenseStrategy,
    received_updates: &[UpdateVector],
    weights: &[f64],
    trusted_update: Option<&UpdateVector>,
    rng: &mut R,
) -> Result<RoundAggregationRecord> {
    if strategy.mode == DefenseMode::BlackBoxWeighted {
        let trusted = trusted_update.ok_or(Error::MissingTrustedUpdate)?;
        let results = strategy
            .candidates
            .iter()
            .map(|rule| rule.aggregate(received_updates, Some(weights)))
            .collect::<Result<Vec<_>>>()?;
        let probs = weighted_probs(&results, trusted)?;
        let rule_index = probability::sample_index(&probs, rng);
        return Ok(RoundAggregationRecord {
            rule_index,
            chosen_aggregate: results[rule_index].clone(),
            candidate_results: Some(results),
            probabilities_used: probs,
        });
    }
    let rule_index = sample_rule(strategy, rng);
    let chosen_aggregate = strategy.candidates[rule_index].aggregate(received_updates, Some(weights))?;
    Ok(RoundAggregationRecord {
        rule_index,
        candidate_results: None,
        chosen_aggregate,
        probabilities_used: strategy.distribution.clone(),
    })
}
