use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationRule;
use crate::attacks::{
    adversary_select_attack, craft_updates, estimate_impact_matrix, targeted_label, AdversaryKnowledge, AttackKind,
    Visibility,
};
use crate::defense::DefenseStrategy;
use crate::error::{Error, Result};
use crate::probability;
use crate::rng::stream;
use crate::vector::UpdateVector;

use super::config::{AttackConfig, RuleSpec};

/// The colluding malicious clients. Built only from what the server reveals
/// through [`DefenseStrategy::adversary_view`], the attack config and the
/// seed, so a black-box adversary cannot depend on the server's candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adversary {
    pub attack: AttackConfig,
    pub knowledge: AdversaryKnowledge,
    /// Revealed by white-box servers only.
    pub defense_distribution: Option<Vec<f64>>,
    /// Rules a black-box adversary may target.
    pub repertoire: Vec<AggregationRule>,
    pub seed: u64,
}

impl Adversary {
    pub fn new(attack: &AttackConfig, strategy: &DefenseStrategy, default_h: usize, seed: u64) -> Result<Self> {
        let mut knowledge = strategy.adversary_view();
        let defense_distribution = match knowledge.visibility {
            Visibility::BlackBox => None,
            _ => Some(strategy.distribution().to_vec()),
        };
        if knowledge.visibility == Visibility::WhiteBoxDynamic {
            knowledge.impact_matrix = attack.impact_matrix.clone();
        }
        let repertoire = match (&attack.target, &attack.targets) {
            (Some(rule), _) => vec![rule.resolve(default_h)],
            (None, Some(rules)) => rules.iter().map(|r| r.resolve(default_h)).collect(),
            (None, None) => RuleSpec::standard().iter().map(|r| r.resolve(default_h)).collect(),
        };
        if repertoire.is_empty() {
            return Err(crate::error::invalid("attack.targets", "must be non-empty"));
        }
        Ok(Self {
            attack: attack.clone(),
            knowledge,
            defense_distribution,
            repertoire,
            seed,
        })
    }

    pub fn kind(&self) -> AttackKind {
        self.attack.kind
    }

    /// Picks the rule to attack this round; `None` for AGR-agnostic attacks.
    pub fn choose_target(
        &self,
        benign_updates: &[UpdateVector],
        n_malicious: usize,
        round: u64,
    ) -> Result<Option<AggregationRule>> {
        if !self.attack.kind.is_adaptive() {
            return Ok(None);
        }
        let known = self.knowledge.known_candidate_set.as_deref();
        match (self.knowledge.visibility, known, &self.defense_distribution) {
            (Visibility::WhiteBoxStatic, Some(rules), Some(p)) => {
                let i = (0..p.len()).fold(0, |best, i| if p[i] > p[best] { i } else { best });
                Ok(Some(rules[i]))
            }
            (Visibility::WhiteBoxDynamic, Some(rules), Some(p)) => {
                let mut knowledge = self.knowledge.clone();
                if knowledge.impact_matrix.is_none() {
                    knowledge.impact_matrix = Some(estimate_impact_matrix(
                        self.attack.kind,
                        self.attack.perturbation,
                        benign_updates,
                        rules,
                        rules,
                        n_malicious,
                    )?);
                }
                let i = adversary_select_attack(&knowledge, p)?;
                Ok(Some(rules[i]))
            }
            (Visibility::BlackBox, _, _) => {
                let mut rng = stream(self.seed, "attack-target", round, 0);
                let p = probability::uniform(self.repertoire.len());
                Ok(Some(self.repertoire[probability::sample_index(&p, &mut rng)]))
            }
            _ => Err(crate::error::invalid(
                "knowledge",
                "white-box adversary without candidate set",
            )),
        }
    }

    /// Malicious uploads for one round plus the attack label recorded in the
    /// log. Label flipping is not crafted here; its updates come from
    /// training on poisoned shards.
    pub fn craft(
        &self,
        benign_updates: &[UpdateVector],
        n_total: usize,
        n_malicious: usize,
        round: u64,
    ) -> Result<(Vec<UpdateVector>, String)> {
        if self.attack.kind == AttackKind::LabelFlip {
            return Err(crate::error::invalid(
                "kind",
                "label flipping is produced by local training",
            ));
        }
        if benign_updates.is_empty() {
            return Err(Error::EmptyInput);
        }
        let target = self.choose_target(benign_updates, n_malicious, round)?;
        let spec = self.attack.spec(target);
        let mut rng = stream(self.seed, "attack", round, 0);
        let updates = craft_updates(&spec, benign_updates, n_total, n_malicious, &mut rng)?;
        Ok((updates, targeted_label(spec.kind, target.as_ref())))
    }
}

/// Flips each label with the attack's class mapping.
pub(crate) fn flip_labels(data: &crate::learning::Dataset, num_classes: usize) -> Result<crate::learning::Dataset> {
    for &label in data.labels() {
        crate::attacks::attack_label_flip(label, num_classes)?;
    }
    Ok(data.map_labels(|c| num_classes - 1 - c))
}
