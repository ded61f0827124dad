use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::AttackKind;
use crate::defense::{defend_round, DefenseMode, DefenseStrategy, RoundAggregationRecord};
use crate::error::{invalid, Error, Result};
use crate::learning::{
    compute_trusted_update, dirichlet_partition, estimate_smoothness, evaluate, gradient_heterogeneity,
    gradient_norm_sq, gradient_variance, local_train, read_dataset_text, Dataset, GaussianMixture, Model,
    MomentumState, Partition,
};
use crate::probability;
use crate::rng::stream;
use crate::theory::{self, empirical_alpha, TheoryInputs};
use crate::vector::UpdateVector;

use super::adversary::{flip_labels, Adversary};
use super::config::ExperimentConfig;
use super::negative_impact;

/// Data and initial model shared by the baseline and the attacked run.
#[derive(Debug, Clone)]
pub struct Environment {
    pub train: Dataset,
    pub partition: Partition,
    pub test: Dataset,
    pub root: Dataset,
    pub initial_model: Model,
}

impl Environment {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        let spec = &config.dataset;
        let seed = config.seed;
        let (train, test, root) = match &spec.source {
            Some(path) => {
                let all = read_dataset_text(path)?;
                if all.num_classes() > spec.num_classes {
                    return Err(Error::Config {
                        path: "dataset.num_classes".into(),
                        reason: format!("file declares {} classes", all.num_classes()),
                    });
                }
                let (test, rest) = all.split_at(spec.test_samples);
                let (root, train) = rest.split_at(spec.root_samples);
                if train.is_empty() {
                    return Err(Error::Config {
                        path: "dataset.source".into(),
                        reason: "no rows left for training after test and root splits".into(),
                    });
                }
                (train, test, root)
            }
            None => {
                let task = GaussianMixture::new(
                    spec.num_classes,
                    spec.feature_dim,
                    spec.class_separation,
                    &mut stream(seed, "task", 0, 0),
                )?;
                let train = task.sample(spec.train_samples, &mut stream(seed, "train-data", 0, 0));
                let test = task.sample(spec.test_samples, &mut stream(seed, "test-data", 0, 0));
                let root = task.sample(spec.root_samples, &mut stream(seed, "root-data", 0, 0));
                (train, test, root)
            }
        };
        let partition = dirichlet_partition(
            &train,
            config.n_clients,
            spec.concentration,
            &mut stream(seed, "partition", 0, 0),
        )?;
        let initial_model = Model::init(
            config.model,
            train.feature_dim(),
            spec.num_classes,
            &mut stream(seed, "model-init", 0, 0),
        );
        Ok(Self {
            train,
            partition,
            test,
            root,
            initial_model,
        })
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub sampled_clients: Vec<usize>,
    /// Malicious clients among the sampled ones.
    pub h_t: usize,
    /// Sampled candidate; `None` when the round failed.
    pub rule_index: Option<usize>,
    pub rule: Option<String>,
    /// Attack used this round, e.g. `fang-krum`; `None` when no malicious
    /// client was sampled.
    pub attack_kind: Option<String>,
    pub test_accuracy: f64,
    /// `None` flags an undefined coefficient (zero honest spread).
    pub alpha_hat: Option<f64>,
    pub inner_product: Option<f64>,
    /// P-weighted robustness coefficient over the candidates.
    pub expected_alpha: Option<f64>,
    pub negative_impact_running: Option<f64>,
    /// Digest of every upload, aligned with `sampled_clients`.
    pub upload_digests: Vec<String>,
    pub aggregate_digest: Option<String>,
    /// Reason the round left the model unchanged.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub a_ini: f64,
    pub a_att: f64,
    pub negative_impact: f64,
    /// Mean of the per-round expected coefficient over rounds where it is defined.
    pub expected_alpha: Option<f64>,
    pub initial_accuracy: f64,
    pub rounds: usize,
    pub failed_rounds: usize,
    /// Text block with the convergence-bound constants estimated from the run.
    pub theory: Option<String>,
}

/// Config header, ordered round records and the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundRecord>,
    pub summary: Option<Summary>,
}

impl MetricsLog {
    pub fn accuracies(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.test_accuracy).collect()
    }
}

/// Everything that happened in one round, including the uploads themselves.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub record: RoundRecord,
    pub uploads: Vec<UpdateVector>,
    pub weights: Vec<f64>,
    pub malicious: Vec<bool>,
    pub aggregate: Option<UpdateVector>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for client training; 1 runs inline.
    pub threads: usize,
    /// Estimate the convergence-bound constants at the end of attacked runs.
    pub theory: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            theory: true,
        }
    }
}

/// Round-by-round state of one federated run.
pub struct Simulation {
    config: ExperimentConfig,
    env: Arc<Environment>,
    strategy: DefenseStrategy,
    adversary: Option<Adversary>,
    poisoned: Vec<Dataset>,
    model: Model,
    momenta: Vec<MomentumState>,
    records: Vec<RoundRecord>,
    initial_accuracy: f64,
    baseline_accuracies: Option<Vec<f64>>,
    snapshots: Vec<Vec<f64>>,
    pool: Option<rayon::ThreadPool>,
}

const SNAPSHOTS: usize = 8;

impl Simulation {
    pub fn new(config: &ExperimentConfig, env: Arc<Environment>, threads: usize) -> Result<Self> {
        config.validate()?;
        let strategy = config.strategy()?;
        let adversary = match &config.attack {
            Some(attack) if config.malicious_count() > 0 => {
                Some(Adversary::new(attack, &strategy, config.default_rule_h(), config.seed)?)
            }
            _ => None,
        };
        let num_classes = config.dataset.num_classes;
        let poisoned = match &adversary {
            Some(a) if a.kind() == AttackKind::LabelFlip => (0..config.malicious_count())
                .map(|c| flip_labels(&env.partition.shards[c], num_classes))
                .collect::<Result<_>>()?,
            _ => Vec::new(),
        };
        let pool = if threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build()
                    .map_err(|e| invalid("threads", e.to_string()))?,
            )
        } else {
            None
        };
        let model = env.initial_model.clone();
        let initial_accuracy = evaluate(&model, &env.test)?;
        Ok(Self {
            momenta: vec![MomentumState::new(config.beta); config.n_clients],
            config: config.clone(),
            strategy,
            adversary,
            poisoned,
            snapshots: vec![model.params.clone()],
            model,
            records: Vec::new(),
            initial_accuracy,
            baseline_accuracies: None,
            pool,
            env,
        })
    }

    /// Reference accuracies for the running negative impact.
    pub fn with_baseline(mut self, accuracies: Vec<f64>) -> Self {
        self.baseline_accuracies = Some(accuracies);
        self
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn strategy(&self) -> &DefenseStrategy {
        &self.strategy
    }

    pub fn adversary(&self) -> Option<&Adversary> {
        self.adversary.as_ref()
    }

    pub fn round(&self) -> usize {
        self.records.len()
    }

    pub fn is_malicious(&self, client: usize) -> bool {
        self.adversary.is_some() && client < self.config.malicious_count()
    }

    fn shard(&self, client: usize) -> &Dataset {
        if self.is_malicious(client) && !self.poisoned.is_empty() {
            &self.poisoned[client]
        } else {
            &self.env.partition.shards[client]
        }
    }

    /// Runs one round and appends its record.
    pub fn step(&mut self) -> Result<RoundOutcome> {
        let t = self.round();
        let seed = self.config.seed;
        let k = self.config.clients_per_round();
        let mut sampled =
            index::sample(&mut stream(seed, "sampling", t as u64, 0), self.config.n_clients, k).into_vec();
        sampled.sort_unstable();
        let malicious: Vec<bool> = sampled.iter().map(|&c| self.is_malicious(c)).collect();
        let h_t = malicious.iter().filter(|&&m| m).count();
        let label_flip = self
            .adversary
            .as_ref()
            .is_some_and(|a| a.kind() == AttackKind::LabelFlip);

        let trainers: Vec<usize> = sampled
            .iter()
            .zip(&malicious)
            .filter(|(_, &m)| !m || label_flip)
            .map(|(&c, _)| c)
            .collect();
        let params = self.config.train_params();
        let this = &*self;
        let train = |&c: &usize| -> Result<Option<(UpdateVector, MomentumState)>> {
            let shard = this.shard(c);
            if shard.is_empty() {
                return Ok(None);
            }
            let mut rng = stream(seed, "local-train", t as u64, c as u64);
            local_train(&this.model, shard, &params, this.momenta[c].clone(), &mut rng).map(Some)
        };
        let trained: Vec<Result<Option<(UpdateVector, MomentumState)>>> = match &self.pool {
            Some(pool) => pool.install(|| trainers.par_iter().map(train).collect()),
            None => trainers.iter().map(train).collect(),
        };
        let dim = self.model.dim();
        let mut local = Vec::with_capacity(trainers.len());
        for (&c, result) in trainers.iter().zip(trained) {
            match result? {
                Some((update, momentum)) => {
                    self.momenta[c] = momentum;
                    local.push((c, update.with_client(c)));
                }
                None => local.push((c, UpdateVector::zeros(dim).with_client(c))),
            }
        }
        let local_of = |c: usize| local.iter().find(|(id, _)| *id == c).map(|(_, u)| u.clone());

        let benign: Vec<UpdateVector> = sampled
            .iter()
            .zip(&malicious)
            .filter(|(_, &m)| !m)
            .map(|(&c, _)| local_of(c).expect("benign clients train"))
            .collect();
        let mut attack_kind = None;
        let mut failure = None;
        let crafted: Vec<UpdateVector> = match (&self.adversary, h_t) {
            (Some(adv), h) if h > 0 => {
                attack_kind = Some(adv.kind().name().to_string());
                if label_flip {
                    Vec::new()
                } else {
                    match adv.craft(&benign, k, h, t as u64) {
                        Ok((updates, label)) => {
                            attack_kind = Some(label);
                            updates
                        }
                        Err(e) => {
                            failure = Some(format!("attack: {e}"));
                            Vec::new()
                        }
                    }
                }
            }
            _ => Vec::new(),
        };

        let mut uploads = Vec::with_capacity(k);
        let mut crafted_iter = crafted.into_iter();
        for (&c, &m) in sampled.iter().zip(&malicious) {
            let upload = if m && !label_flip {
                crafted_iter.next().map(|u| u.with_client(c))
            } else {
                local_of(c)
            };
            uploads.push(upload.unwrap_or_else(|| UpdateVector::zeros(dim).with_client(c)));
        }
        let weights: Vec<f64> = sampled
            .iter()
            .map(|&c| self.env.partition.shards[c].len() as f64)
            .collect();

        let mut aggregate = None;
        let mut rule_index = None;
        let mut expected_alpha = None;
        if failure.is_none() {
            match self.aggregate(&uploads, &weights, t) {
                Ok(rec) => {
                    expected_alpha = self.expected_alpha(&uploads, &weights, &benign_or_all(&benign, &uploads), &rec);
                    rule_index = Some(rec.rule_index);
                    aggregate = Some(rec.chosen_aggregate);
                }
                Err(e) => failure = Some(format!("aggregation: {e}")),
            }
        }
        if let Some(q) = &aggregate {
            self.model = self.model.apply(q)?;
        }
        let test_accuracy = evaluate(&self.model, &self.env.test)?;
        let honest = benign_or_all(&benign, &uploads);
        let (alpha_hat, inner_product) = match &aggregate {
            Some(q) => {
                let est = empirical_alpha(&honest, q)?;
                (est.alpha_hat, Some(est.inner_product))
            }
            None => (None, None),
        };
        let negative_impact_running = self.baseline_accuracies.as_ref().map(|base| {
            let w = self.config.eval_window;
            let mut own: Vec<f64> = self.records.iter().map(|r| r.test_accuracy).collect();
            own.push(test_accuracy);
            let own = window_mean(&own, w);
            let reference = window_mean(&base[..base.len().min(t + 1)], w);
            (reference - own).max(0.0)
        });
        if failure.is_some() {
            log::warn!("round {t} failed: {}", failure.as_deref().unwrap_or(""));
        }
        let record = RoundRecord {
            round: t,
            sampled_clients: sampled,
            h_t,
            rule: rule_index.map(|i| self.strategy.candidates()[i].label()),
            rule_index,
            attack_kind,
            test_accuracy,
            alpha_hat,
            inner_product,
            expected_alpha,
            negative_impact_running,
            upload_digests: uploads.iter().map(UpdateVector::digest).collect(),
            aggregate_digest: aggregate.as_ref().map(UpdateVector::digest),
            failure,
        };
        self.records.push(record.clone());
        let stride = (self.config.rounds / SNAPSHOTS).max(1);
        if (t + 1).is_multiple_of(stride) || t + 1 == self.config.rounds {
            self.snapshots.push(self.model.params.clone());
        }
        Ok(RoundOutcome {
            record,
            uploads,
            weights,
            malicious,
            aggregate,
        })
    }

    fn aggregate(&self, uploads: &[UpdateVector], weights: &[f64], t: usize) -> Result<RoundAggregationRecord> {
        let seed = self.config.seed;
        let trusted = if self.strategy.mode() == DefenseMode::BlackBoxWeighted {
            let mut rng = stream(seed, "root-train", t as u64, 0);
            Some(compute_trusted_update(
                &self.model,
                &self.env.root,
                self.config.eta,
                self.config.local_steps,
                self.config.batch_size,
                &mut rng,
            )?)
        } else {
            None
        };
        let mut rng = stream(seed, "defense", t as u64, 0);
        defend_round(&self.strategy, uploads, weights, trusted.as_ref(), &mut rng)
    }

    /// `sum_j P_j alpha_hat_j` over the candidates with positive probability,
    /// with `P` the distribution the round actually sampled from.
    fn expected_alpha(
        &self,
        uploads: &[UpdateVector],
        weights: &[f64],
        honest: &[UpdateVector],
        rec: &RoundAggregationRecord,
    ) -> Option<f64> {
        let p = &rec.probabilities_used;
        let mut total = 0.0;
        for (j, rule) in self.strategy.candidates().iter().enumerate() {
            if p[j] <= 0.0 {
                continue;
            }
            let q = match (&rec.candidate_results, j == rec.rule_index) {
                (_, true) => rec.chosen_aggregate.clone(),
                (Some(results), false) => results[j].clone(),
                (None, false) => rule.aggregate(uploads, Some(weights)).ok()?,
            };
            total += p[j] * empirical_alpha(honest, &q).ok()?.alpha_hat?;
        }
        Some(total)
    }

    /// Runs the remaining rounds and summarises the run.
    pub fn run(mut self, with_theory: bool) -> Result<MetricsLog> {
        while self.round() < self.config.rounds {
            self.step()?;
        }
        let summary = self.summary(with_theory);
        Ok(MetricsLog {
            config: self.config,
            rounds: self.records,
            summary: Some(summary),
        })
    }

    fn summary(&self, with_theory: bool) -> Summary {
        let accuracies: Vec<f64> = self.records.iter().map(|r| r.test_accuracy).collect();
        let a_att = if accuracies.is_empty() {
            self.initial_accuracy
        } else {
            window_mean(&accuracies, self.config.eval_window)
        };
        let a_ini = match &self.baseline_accuracies {
            Some(base) if !base.is_empty() => window_mean(base, self.config.eval_window),
            Some(_) => self.initial_accuracy,
            None => a_att,
        };
        let alphas: Vec<f64> = self.records.iter().filter_map(|r| r.expected_alpha).collect();
        let expected_alpha = (!alphas.is_empty()).then(|| alphas.iter().sum::<f64>() / alphas.len() as f64);
        let theory = if with_theory {
            match self
                .theory_inputs(expected_alpha.unwrap_or(0.0))
                .and_then(|inputs| theory::report(&inputs))
            {
                Ok(text) => Some(text),
                Err(e) => {
                    log::info!("theory constants unavailable: {e}");
                    None
                }
            }
        } else {
            None
        };
        Summary {
            a_ini,
            a_att,
            negative_impact: negative_impact(a_ini, a_att).unwrap_or(0.0),
            expected_alpha,
            initial_accuracy: self.initial_accuracy,
            rounds: self.records.len(),
            failed_rounds: self.records.iter().filter(|r| r.failure.is_some()).count(),
            theory,
        }
    }

    /// Convergence-bound constants estimated along the trajectory.
    pub fn theory_inputs(&self, expected_alpha: f64) -> Result<TheoryInputs> {
        let env = &self.env;
        let x0 = &env.initial_model;
        let l = estimate_smoothness(x0, &env.train, &self.snapshots)?;
        let shards = &env.partition.shards;
        let largest = (0..shards.len())
            .max_by_key(|&i| (shards[i].len(), usize::MAX - i))
            .ok_or(Error::EmptyDataset)?;
        let g_l2 = gradient_variance(
            &self.model,
            &shards[largest],
            self.config.batch_size,
            8,
            &mut stream(self.config.seed, "theory", 0, 0),
        )?;
        let g_g2 = gradient_heterogeneity(&self.model, shards)?;
        let all: Vec<usize> = (0..env.train.len()).collect();
        let f0 = x0.loss(&env.train, &all)?;
        let mut f_min = f0;
        for params in &self.snapshots {
            f_min = f_min.min(x0.with_params(params.clone())?.loss(&env.train, &all)?);
        }
        Ok(TheoryInputs {
            l,
            g_l2,
            g_g2,
            k: self.config.clients_per_round(),
            h_m: self.records.iter().map(|r| r.h_t).max().unwrap_or(0),
            t: self.records.len() as u64,
            expected_alpha,
            f0_gap: f0 - f_min,
            grad0_sq: gradient_norm_sq(x0, &env.train)?,
        })
    }
}

fn benign_or_all(benign: &[UpdateVector], uploads: &[UpdateVector]) -> Vec<UpdateVector> {
    if benign.is_empty() {
        uploads.to_vec()
    } else {
        benign.to_vec()
    }
}

/// Mean of the last `window` entries.
fn window_mean(values: &[f64], window: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    probability::expectation(&probability::uniform(tail.len()), tail)
}

/// The unattacked FedAvg reference run for `config`.
pub fn run_baseline(config: &ExperimentConfig, options: &RunOptions) -> Result<MetricsLog> {
    let baseline = config.baseline();
    let env = Arc::new(Environment::build(&baseline)?);
    Simulation::new(&baseline, env, options.threads)?.run(false)
}

/// Attacked run measured against a previously computed baseline.
pub fn run_attacked(config: &ExperimentConfig, baseline: &MetricsLog, options: &RunOptions) -> Result<MetricsLog> {
    if baseline.config != config.baseline() {
        return Err(invalid(
            "baseline",
            "baseline log was produced by a different configuration",
        ));
    }
    let env = Arc::new(Environment::build(config)?);
    let accuracies = baseline.accuracies();
    Simulation::new(config, env, options.threads)?
        .with_baseline(accuracies)
        .run(options.theory)
}

/// Baseline then attacked run; returns the attacked log with `A_ini` taken
/// from the baseline.
pub fn run_experiment(config: &ExperimentConfig) -> Result<MetricsLog> {
    run_experiment_with(config, &RunOptions::default())
}

pub fn run_experiment_with(config: &ExperimentConfig, options: &RunOptions) -> Result<MetricsLog> {
    config.validate()?;
    let baseline = run_baseline(config, options)?;
    run_attacked(config, &baseline, options)
}
