use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregationRule, RuleKind, DEFAULT_BETA_TRIM, DEFAULT_KRUM_K};
use crate::attacks::{AttackKind, AttackSpec, Perturbation, Visibility, DEFAULT_GAUSSIAN_SIGMA};
use crate::defense::{DefenseMode, DefenseStrategy};
use crate::error::{Error, Result};
use crate::learning::{Architecture, TrainParams};

/// One experiment, as read from a TOML file. Field names mirror the
/// experiment parameters one-to-one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub seed: u64,
    #[serde(default = "defaults::n_clients")]
    pub n_clients: usize,
    #[serde(default = "defaults::sample_ratio")]
    pub sample_ratio: f64,
    #[serde(default)]
    pub malicious_fraction: f64,
    pub rounds: usize,
    pub eta: f64,
    #[serde(default = "defaults::beta")]
    pub beta: f64,
    #[serde(default = "defaults::local_steps")]
    pub local_steps: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Rounds averaged into the final accuracy.
    #[serde(default = "defaults::eval_window")]
    pub eval_window: usize,
    pub dataset: DatasetSpec,
    #[serde(default = "defaults::model")]
    pub model: Architecture,
    pub defense: DefenseSpec,
    #[serde(default)]
    pub attack: Option<AttackConfig>,
    /// Optional explicit adversary knowledge; must agree with the defense mode.
    #[serde(default)]
    pub adversary: Option<Visibility>,
}

mod defaults {
    use crate::learning::Architecture;

    pub fn n_clients() -> usize {
        200
    }
    pub fn sample_ratio() -> f64 {
        0.2
    }
    pub fn beta() -> f64 {
        1.0
    }
    pub fn local_steps() -> usize {
        1
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn eval_window() -> usize {
        10
    }
    pub fn model() -> Architecture {
        Architecture::Linear
    }
    pub fn num_classes() -> usize {
        10
    }
    pub fn root_samples() -> usize {
        100
    }
    pub fn concentration() -> f64 {
        0.5
    }
    pub fn krum_k() -> usize {
        crate::aggregation::DEFAULT_KRUM_K
    }
    pub fn beta_trim() -> f64 {
        crate::aggregation::DEFAULT_BETA_TRIM
    }
    pub fn sigma() -> f64 {
        crate::attacks::DEFAULT_GAUSSIAN_SIGMA
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default = "defaults::num_classes")]
    pub num_classes: usize,
    pub feature_dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    #[serde(default = "defaults::root_samples")]
    pub root_samples: usize,
    pub class_separation: f64,
    /// Dirichlet concentration of the label split.
    #[serde(default = "defaults::concentration")]
    pub concentration: f64,
    /// Optional comma-separated dataset file replacing the synthetic task.
    /// Rows are taken in order: test, then root, then training.
    #[serde(default)]
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Static,
    WhiteBoxDynamic,
    BlackBoxUniform,
    BlackBoxWeighted,
}

/// A rule whose `h` may be left to the experiment default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleSpec {
    pub kind: RuleKind,
    #[serde(default)]
    pub h: Option<usize>,
    #[serde(default = "defaults::krum_k")]
    pub k: usize,
    #[serde(default = "defaults::beta_trim")]
    pub beta_trim: f64,
}

impl RuleSpec {
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            h: None,
            k: DEFAULT_KRUM_K,
            beta_trim: DEFAULT_BETA_TRIM,
        }
    }

    pub fn resolve(&self, default_h: usize) -> AggregationRule {
        AggregationRule {
            kind: self.kind,
            h: self.h.unwrap_or(default_h),
            k: self.k,
            beta_trim: self.beta_trim,
        }
    }

    pub fn standard() -> Vec<RuleSpec> {
        [
            RuleKind::Krum,
            RuleKind::Median,
            RuleKind::TrimmedMean,
            RuleKind::Bulyan,
        ]
        .into_iter()
        .map(RuleSpec::new)
        .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSpec {
    pub mode: ModeName,
    #[serde(default)]
    pub static_index: usize,
    #[serde(default = "RuleSpec::standard")]
    pub candidates: Vec<RuleSpec>,
}

impl DefenseSpec {
    pub fn fixed(kind: RuleKind) -> Self {
        Self {
            mode: ModeName::Static,
            static_index: 0,
            candidates: vec![RuleSpec::new(kind)],
        }
    }

    pub fn dynamic(mode: ModeName) -> Self {
        Self {
            mode,
            static_index: 0,
            candidates: RuleSpec::standard(),
        }
    }

    pub fn mode(&self) -> DefenseMode {
        match self.mode {
            ModeName::Static => DefenseMode::Static(self.static_index),
            ModeName::WhiteBoxDynamic => DefenseMode::WhiteBoxDynamic,
            ModeName::BlackBoxUniform => DefenseMode::BlackBoxUniform,
            ModeName::BlackBoxWeighted => DefenseMode::BlackBoxWeighted,
        }
    }

    /// Short label such as `static:krum` or `black_box_uniform`.
    pub fn label(&self) -> String {
        match self.mode {
            ModeName::Static => match self.candidates.get(self.static_index) {
                Some(rule) => format!("static:{}", rule.kind.name()),
                None => "static".to_string(),
            },
            _ => self.mode().name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    pub kind: AttackKind,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub z_override: Option<f64>,
    /// Fixed target for a black-box adversary. White-box adversaries target
    /// the server's rules instead.
    #[serde(default)]
    pub target: Option<RuleSpec>,
    /// Rules a black-box adversary draws its target from (uniformly) when no
    /// fixed target is given. Defaults to the four standard robust rules.
    #[serde(default)]
    pub targets: Option<Vec<RuleSpec>>,
    /// Precomputed impact matrix for a white-box dynamic adversary
    /// (`[attack crafted against candidate i][candidate j]`). Estimated from
    /// each round's visible updates when absent.
    #[serde(default)]
    pub impact_matrix: Option<Vec<Vec<f64>>>,
}

impl AttackConfig {
    pub fn new(kind: AttackKind) -> Self {
        Self {
            kind,
            sigma: DEFAULT_GAUSSIAN_SIGMA,
            perturbation: Perturbation::NegSign,
            z_override: None,
            target: None,
            targets: None,
            impact_matrix: None,
        }
    }

    pub fn spec(&self, target: Option<AggregationRule>) -> AttackSpec {
        AttackSpec {
            kind: self.kind,
            sigma: self.sigma,
            target_rule: target,
            perturbation: self.perturbation,
            z_override: self.z_override,
        }
    }
}

fn config_err(path: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| config_err("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| config_err(&path.display().to_string(), e.to_string()))?;
        let mut config = Self::from_toml_str(&text)?;
        if config.name.is_none() {
            config.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Sampled clients per round, `round(sample_ratio * n_clients)`.
    pub fn clients_per_round(&self) -> usize {
        ((self.sample_ratio * self.n_clients as f64).round() as usize).clamp(1, self.n_clients.max(1))
    }

    /// Malicious clients, `floor(malicious_fraction * n_clients)`.
    pub fn malicious_count(&self) -> usize {
        (self.malicious_fraction * self.n_clients as f64 + 1e-9).floor() as usize
    }

    /// Default `h` for rules that leave it unset: the expected number of
    /// malicious clients in a round, rounded up.
    pub fn default_rule_h(&self) -> usize {
        (self.malicious_fraction * self.clients_per_round() as f64 - 1e-9)
            .ceil()
            .max(0.0) as usize
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            eta: self.eta,
            beta: self.beta,
            local_steps: self.local_steps,
            batch_size: self.batch_size,
        }
    }

    pub fn candidate_rules(&self) -> Vec<AggregationRule> {
        let h = self.default_rule_h();
        self.defense.candidates.iter().map(|r| r.resolve(h)).collect()
    }

    pub fn strategy(&self) -> Result<DefenseStrategy> {
        DefenseStrategy::new(self.defense.mode(), self.candidate_rules())
            .map_err(|e| config_err("defense", e.to_string()))
    }

    /// The unattacked FedAvg run used for the reference accuracy: same data,
    /// sampling, and training streams, mean aggregation, no attack.
    pub fn baseline(&self) -> ExperimentConfig {
        ExperimentConfig {
            defense: DefenseSpec::fixed(RuleKind::Mean),
            attack: None,
            adversary: None,
            ..self.clone()
        }
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            format!(
                "{}_{}_{}_s{}",
                self.defense.label().replace(':', "-"),
                self.attack.as_ref().map_or("none", |a| a.kind.name()),
                self.malicious_fraction,
                self.seed
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(config_err("n_clients", "must be >= 1"));
        }
        if !(self.sample_ratio > 0.0 && self.sample_ratio <= 1.0) {
            return Err(config_err("sample_ratio", "must lie in (0, 1]"));
        }
        if !(0.0..0.5).contains(&self.malicious_fraction) {
            return Err(config_err("malicious_fraction", "must lie in [0, 0.5)"));
        }
        if 2 * self.malicious_count() >= self.n_clients && self.malicious_count() > 0 {
            return Err(config_err(
                "malicious_fraction",
                "malicious clients must be fewer than half",
            ));
        }
        self.train_params()
            .validate()
            .map_err(|e| config_err("eta/beta/local_steps/batch_size", e.to_string()))?;
        if self.eval_window == 0 {
            return Err(config_err("eval_window", "must be >= 1"));
        }
        let d = &self.dataset;
        if d.num_classes < 2 {
            return Err(config_err("dataset.num_classes", "must be >= 2"));
        }
        if d.source.is_none() {
            if d.feature_dim == 0 {
                return Err(config_err("dataset.feature_dim", "must be >= 1"));
            }
            if d.train_samples == 0 {
                return Err(config_err("dataset.train_samples", "must be >= 1"));
            }
            if !(d.class_separation.is_finite() && d.class_separation >= 0.0) {
                return Err(config_err("dataset.class_separation", "must be finite and >= 0"));
            }
        }
        if d.test_samples == 0 {
            return Err(config_err("dataset.test_samples", "must be >= 1"));
        }
        if !(d.concentration.is_finite() && d.concentration > 0.0) {
            return Err(config_err("dataset.concentration", "must be positive"));
        }
        if let Architecture::Mlp { hidden: 0 } = self.model {
            return Err(config_err("model.hidden", "must be >= 1"));
        }
        let mode = self.defense.mode();
        if self.defense.candidates.is_empty() {
            return Err(config_err("defense.candidates", "must be non-empty"));
        }
        if mode == DefenseMode::BlackBoxWeighted && d.root_samples == 0 {
            return Err(config_err(
                "dataset.root_samples",
                "weighted defense needs a root dataset",
            ));
        }
        let k = self.clients_per_round();
        for (i, rule) in self.candidate_rules().iter().enumerate() {
            rule.check_inputs(k)
                .map_err(|e| config_err(&format!("defense.candidates[{i}]"), e.to_string()))?;
        }
        self.strategy()?;
        if let Some(v) = self.adversary {
            if v != mode.visibility() {
                return Err(config_err(
                    "adversary",
                    format!("{v:?} adversary is inconsistent with a {} server", mode.name()),
                ));
            }
        }
        if let Some(attack) = &self.attack {
            if !(attack.sigma.is_finite() && attack.sigma >= 0.0) {
                return Err(config_err("attack.sigma", "must be finite and >= 0"));
            }
            let h = self.default_rule_h();
            let repertoire = attack
                .target
                .iter()
                .chain(attack.targets.iter().flatten())
                .map(|r| r.resolve(h));
            for (i, rule) in repertoire.enumerate() {
                rule.check_inputs(k)
                    .map_err(|e| config_err(&format!("attack.targets[{i}]"), e.to_string()))?;
            }
            if let Some(m) = &attack.impact_matrix {
                let n = self.defense.candidates.len();
                if m.len() != n || m.iter().any(|r| r.len() != n || r.iter().any(|v| !v.is_finite())) {
                    return Err(config_err(
                        "attack.impact_matrix",
                        format!("must be a finite {n}x{n} matrix"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
rounds = 5
eta = 0.1
malicious_fraction = 0.1

[dataset]
feature_dim = 4
train_samples = 400
test_samples = 100
class_separation = 3.0

[defense]
mode = "black_box_uniform"

[attack]
kind = "fang"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.n_clients, 200);
        assert_eq!(c.sample_ratio, 0.2);
        assert_eq!(c.clients_per_round(), 40);
        assert_eq!(c.malicious_count(), 20);
        assert_eq!(c.default_rule_h(), 4);
        assert_eq!(c.dataset.num_classes, 10);
        assert_eq!(c.defense.candidates.len(), 4);
        assert_eq!(c.candidate_rules()[0], AggregationRule::krum(4, 10));
        let again = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = MINIMAL.replace("malicious_fraction = 0.1", "malicious_fraction = 0.6");
        match ExperimentConfig::from_toml_str(&bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "malicious_fraction"),
            e => panic!("{e}"),
        }
        let bad = MINIMAL.replace(
            "mode = \"black_box_uniform\"",
            "mode = \"black_box_uniform\"\nadversary_typo = 1",
        );
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = format!("adversary = \"white_box_static\"\n{MINIMAL}");
        match ExperimentConfig::from_toml_str(&bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "adversary"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn oversized_bulyan_is_rejected() {
        let bad = MINIMAL.replace(
            "mode = \"black_box_uniform\"",
            "mode = \"static\"\ncandidates = [{ kind = \"bulyan\", h = 10 }]",
        );
        match ExperimentConfig::from_toml_str(&bad).unwrap_err() {
            Error::Config { path, .. } => assert_eq!(path, "defense.candidates[0]"),
            e => panic!("{e}"),
        }
    }
}
