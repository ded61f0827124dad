use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

use super::config::ExperimentConfig;
use super::log::write_log;
use super::sim::{run_attacked, run_baseline, MetricsLog, RunOptions};

/// Outcome of one sweep entry; failures do not stop the sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub label: String,
    pub config: ExperimentConfig,
    pub result: std::result::Result<MetricsLog, Error>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
}

/// Runs every config. Baselines are shared between configs that differ only
/// in defense and attack. Configs run concurrently on `options.threads`
/// workers; each run itself stays single-threaded, so results do not depend
/// on the thread count.
pub fn sweep(configs: &[ExperimentConfig], options: &RunOptions) -> Result<SweepResult> {
    if configs.is_empty() {
        return Err(invalid("configs", "sweep needs at least one config"));
    }
    let inner = RunOptions { threads: 1, ..*options };
    let mut baseline_keys: Vec<ExperimentConfig> = Vec::new();
    for c in configs {
        let b = c.baseline();
        if !baseline_keys.contains(&b) {
            baseline_keys.push(b);
        }
    }
    let run_all = || {
        let baselines: Vec<std::result::Result<MetricsLog, Error>> =
            baseline_keys.par_iter().map(|b| run_baseline(b, &inner)).collect();
        configs
            .par_iter()
            .map(|config| {
                let key = config.baseline();
                let i = baseline_keys.iter().position(|b| *b == key).expect("collected above");
                let result = match &baselines[i] {
                    Ok(base) => run_attacked(config, base, &inner),
                    Err(e) => Err(e.clone()),
                };
                if let Err(e) = &result {
                    log::error!("{}: {e}", config.label());
                }
                SweepEntry {
                    label: config.label(),
                    config: config.clone(),
                    result,
                }
            })
            .collect::<Vec<_>>()
    };
    let entries = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.max(1))
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?
        .install(run_all);
    Ok(SweepResult { entries })
}

fn attack_label(config: &ExperimentConfig) -> String {
    config.attack.as_ref().map_or("none", |a| a.kind.name()).to_string()
}

/// One CSV row per run.
pub fn runs_table<'a>(logs: impl IntoIterator<Item = &'a MetricsLog>) -> String {
    let mut out = String::from(
        "label,defense,attack,malicious_fraction,seed,a_ini,a_att,negative_impact,expected_alpha,failed_rounds\n",
    );
    for log in logs {
        let c = &log.config;
        let (a_ini, a_att, impact, alpha, failed) = match &log.summary {
            Some(s) => (
                s.a_ini.to_string(),
                s.a_att.to_string(),
                s.negative_impact.to_string(),
                s.expected_alpha.map(|a| a.to_string()).unwrap_or_default(),
                s.failed_rounds.to_string(),
            ),
            None => Default::default(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{a_ini},{a_att},{impact},{alpha},{failed}",
            c.label(),
            c.defense.label(),
            attack_label(c),
            c.malicious_fraction,
            c.seed
        );
    }
    out
}

/// Median negative impact per (defense, attack, fraction) over the runs
/// that produced a summary.
pub fn comparison_table<'a>(logs: impl IntoIterator<Item = &'a MetricsLog>) -> String {
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for log in logs {
        if let Some(s) = &log.summary {
            let c = &log.config;
            groups
                .entry((c.defense.label(), attack_label(c), c.malicious_fraction.to_string()))
                .or_default()
                .push(s.negative_impact);
        }
    }
    let mut out = String::from("defense,attack,malicious_fraction,runs,median_negative_impact,mean_negative_impact\n");
    for ((defense, attack, fraction), values) in groups {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let _ = writeln!(
            out,
            "{defense},{attack},{fraction},{},{},{mean}",
            values.len(),
            median(values)
        );
    }
    out
}

pub fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of empty list");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl SweepResult {
    pub fn logs(&self) -> impl Iterator<Item = &MetricsLog> {
        self.entries.iter().filter_map(|e| e.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &Error)> {
        self.entries
            .iter()
            .filter_map(|e| e.result.as_ref().err().map(|err| (e.label.as_str(), err)))
    }

    /// Writes `<label>.jsonl` per successful run plus `runs.csv` and
    /// `comparison.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for entry in &self.entries {
            if let Ok(log) = &entry.result {
                write_log(log, &dir.join(format!("{}.jsonl", entry.label)))?;
            }
        }
        std::fs::write(dir.join("runs.csv"), runs_table(self.logs()))?;
        std::fs::write(dir.join("comparison.csv"), comparison_table(self.logs()))?;
        Ok(())
    }
}
