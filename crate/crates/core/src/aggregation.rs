//! Server-side aggregation rules.
//!
//! | Rule | Inputs needed (m) |
//! |------|-------------------|
//! | [`agg_mean`] | m >= 1 |
//! | [`agg_krum`] | m >= h + 3 |
//! | [`agg_median`] | m >= 1 |
//! | [`agg_trimmed_mean`] | 2 * floor(beta * m) < m |
//! | [`agg_bulyan`] | m - 4h >= 1, m - 2h >= 3, m >= h + 3 |
//!
//! All rules are pure functions over `f64` with deterministic, index-based
//! tie breaking.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::vector::{check_uniform, shifted_mean, sq_dist, UpdateVector};

pub const DEFAULT_KRUM_K: usize = 10;
pub const DEFAULT_BETA_TRIM: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Mean,
    Krum,
    Median,
    TrimmedMean,
    Bulyan,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Mean => "mean",
            RuleKind::Krum => "krum",
            RuleKind::Median => "median",
            RuleKind::TrimmedMean => "trimmed_mean",
            RuleKind::Bulyan => "bulyan",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A rule together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationRule {
    pub kind: RuleKind,
    /// Tolerated Byzantine count (Krum, Bulyan).
    #[serde(default)]
    pub h: usize,
    /// Number of lowest-score updates averaged by Krum.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Fraction trimmed from each side by the trimmed mean.
    #[serde(default = "default_beta_trim")]
    pub beta_trim: f64,
}

fn default_k() -> usize {
    DEFAULT_KRUM_K
}

fn default_beta_trim() -> f64 {
    DEFAULT_BETA_TRIM
}

impl AggregationRule {
    fn with_kind(kind: RuleKind) -> Self {
        Self {
            kind,
            h: 0,
            k: DEFAULT_KRUM_K,
            beta_trim: DEFAULT_BETA_TRIM,
        }
    }

    pub fn mean() -> Self {
        Self::with_kind(RuleKind::Mean)
    }

    pub fn krum(h: usize, k: usize) -> Self {
        Self {
            h,
            k,
            ..Self::with_kind(RuleKind::Krum)
        }
    }

    pub fn median() -> Self {
        Self::with_kind(RuleKind::Median)
    }

    pub fn trimmed_mean(beta_trim: f64) -> Self {
        Self {
            beta_trim,
            ..Self::with_kind(RuleKind::TrimmedMean)
        }
    }

    pub fn bulyan(h: usize) -> Self {
        Self {
            h,
            ..Self::with_kind(RuleKind::Bulyan)
        }
    }

    /// The four robust rules used as the default candidate set.
    pub fn standard_candidates(h: usize) -> Vec<Self> {
        vec![
            Self::krum(h, DEFAULT_KRUM_K),
            Self::median(),
            Self::trimmed_mean(DEFAULT_BETA_TRIM),
            Self::bulyan(h),
        ]
    }

    pub fn label(&self) -> String {
        match self.kind {
            RuleKind::Krum => format!("krum(h={},k={})", self.h, self.k),
            RuleKind::TrimmedMean => format!("trimmed_mean(beta={})", self.beta_trim),
            RuleKind::Bulyan => format!("bulyan(h={})", self.h),
            k => k.name().to_string(),
        }
    }

    /// Verifies the rule can run on `m` inputs.
    pub fn check_inputs(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::EmptyInput);
        }
        match self.kind {
            RuleKind::Mean | RuleKind::Median => Ok(()),
            RuleKind::Krum => {
                if m < self.h + 3 {
                    return Err(Error::TooFewInputs {
                        rule: "krum",
                        got: m,
                        required: self.h + 3,
                    });
                }
                if self.k == 0 || self.k > m {
                    return Err(invalid("k", format!("must be in 1..={m}, got {}", self.k)));
                }
                Ok(())
            }
            RuleKind::TrimmedMean => {
                check_beta(self.beta_trim)?;
                let t = trim_count(self.beta_trim, m);
                if 2 * t >= m {
                    return Err(Error::TooFewInputs {
                        rule: "trimmed_mean",
                        got: m,
                        required: 2 * t + 1,
                    });
                }
                Ok(())
            }
            RuleKind::Bulyan => {
                let required = (4 * self.h + 1).max(2 * self.h + 3).max(self.h + 3);
                if m < required {
                    return Err(Error::TooFewInputs {
                        rule: "bulyan",
                        got: m,
                        required,
                    });
                }
                Ok(())
            }
        }
    }

    /// Aggregates `updates`. `weights` only affect [`RuleKind::Mean`]; when
    /// absent the mean is unweighted.
    pub fn aggregate(&self, updates: &[UpdateVector], weights: Option<&[f64]>) -> Result<UpdateVector> {
        match self.kind {
            RuleKind::Mean => match weights {
                Some(w) => agg_mean(updates, w),
                None => agg_mean(updates, &vec![1.0; updates.len()]),
            },
            RuleKind::Krum => agg_krum(updates, self.h, self.k),
            RuleKind::Median => agg_median(updates),
            RuleKind::TrimmedMean => agg_trimmed_mean(updates, self.beta_trim),
            RuleKind::Bulyan => agg_bulyan(updates, self.h),
        }
    }

    /// Input indices a selection-based rule keeps (Krum's k winners, Bulyan's
    /// selection set). `None` for coordinate-wise rules.
    pub fn selected(&self, updates: &[UpdateVector]) -> Result<Option<Vec<usize>>> {
        match self.kind {
            RuleKind::Krum => krum_select(updates, self.h, self.k).map(Some),
            RuleKind::Bulyan => bulyan_selection(updates, self.h).map(Some),
            _ => Ok(None),
        }
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..0.5).contains(&beta) {
        return Err(invalid("beta_trim", format!("must lie in [0, 0.5), got {beta}")));
    }
    Ok(())
}

fn trim_count(beta: f64, m: usize) -> usize {
    (beta * m as f64).floor() as usize
}

/// Weighted coordinate-wise mean, `sum_i (w_i / sum_j w_j) * V_i`.
pub fn agg_mean(updates: &[UpdateVector], weights: &[f64]) -> Result<UpdateVector> {
    if updates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if weights.len() != updates.len() {
        return Err(Error::LengthMismatch {
            what: "weights",
            expected: updates.len(),
            got: weights.len(),
        });
    }
    if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::InvalidWeight(w));
    }
    let dim = check_uniform(updates)?;
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let base = updates[0].values();
    let mut acc = vec![0.0; dim];
    for (u, w) in updates.iter().zip(weights).skip(1) {
        let scale = w / total;
        for ((a, v), b) in acc.iter_mut().zip(u.values()).zip(base) {
            *a += scale * (v - b);
        }
    }
    let out = acc.iter().zip(base).map(|(a, b)| b + a).collect();
    Ok(UpdateVector::from_raw(out))
}

fn pairwise_sq_dists(updates: &[UpdateVector]) -> Vec<Vec<f64>> {
    let m = updates.len();
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in (i + 1)..m {
            let v = sq_dist(&updates[i], &updates[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Krum score of each member of `active`: the sum of squared distances to its
/// `neighbors` nearest other members.
fn krum_scores(dists: &[Vec<f64>], active: &[usize], neighbors: usize) -> Vec<f64> {
    active
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = active.iter().filter(|&&j| j != i).map(|&j| dists[i][j]).collect();
            row.sort_by(f64::total_cmp);
            row.iter().take(neighbors).sum()
        })
        .collect()
}

/// Positions into `active`, ordered by (score, input index).
fn rank_by_score(active: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..active.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then_with(|| active[a].cmp(&active[b])));
    order
}

/// Indices of the `k` updates Krum keeps, lowest score first.
pub fn krum_select(updates: &[UpdateVector], h: usize, k: usize) -> Result<Vec<usize>> {
    check_uniform(updates)?;
    AggregationRule::krum(h, k).check_inputs(updates.len())?;
    let m = updates.len();
    let dists = pairwise_sq_dists(updates);
    let active: Vec<usize> = (0..m).collect();
    let scores = krum_scores(&dists, &active, m - h - 2);
    Ok(rank_by_score(&active, &scores)
        .into_iter()
        .take(k)
        .map(|p| active[p])
        .collect())
}

/// Multi-Krum: unweighted mean of the `k` lowest-score updates.
pub fn agg_krum(updates: &[UpdateVector], h: usize, k: usize) -> Result<UpdateVector> {
    let chosen = krum_select(updates, h, k)?;
    let picked: Vec<UpdateVector> = chosen.iter().map(|&i| updates[i].clone()).collect();
    crate::vector::mean_of(&picked)
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Coordinate-wise median; even counts average the two middle values.
pub fn agg_median(updates: &[UpdateVector]) -> Result<UpdateVector> {
    let dim = check_uniform(updates)?;
    let mut column = vec![0.0; updates.len()];
    let out = (0..dim)
        .map(|j| {
            for (c, u) in column.iter_mut().zip(updates) {
                *c = u[j];
            }
            column.sort_by(f64::total_cmp);
            median_sorted(&column)
        })
        .collect();
    Ok(UpdateVector::from_raw(out))
}

/// Coordinate-wise trimmed mean dropping `floor(beta * m)` values per side.
pub fn agg_trimmed_mean(updates: &[UpdateVector], beta_trim: f64) -> Result<UpdateVector> {
    let dim = check_uniform(updates)?;
    AggregationRule::trimmed_mean(beta_trim).check_inputs(updates.len())?;
    let m = updates.len();
    let t = trim_count(beta_trim, m);
    let mut column = vec![0.0; m];
    let out = (0..dim)
        .map(|j| {
            for (c, u) in column.iter_mut().zip(updates) {
                *c = u[j];
            }
            column.sort_by(f64::total_cmp);
            shifted_mean(column[t..m - t].iter().copied())
        })
        .collect();
    Ok(UpdateVector::from_raw(out))
}

/// Bulyan's selection set: `m - 2h` input indices chosen by repeated
/// single-winner Krum, each winner removed before the next pass.
///
/// Once the remaining pool is too small for `r - h - 2` neighbours the
/// neighbour count is clamped to `[1, r - 1]`.
pub fn bulyan_selection(updates: &[UpdateVector], h: usize) -> Result<Vec<usize>> {
    check_uniform(updates)?;
    AggregationRule::bulyan(h).check_inputs(updates.len())?;
    let m = updates.len();
    let dists = pairwise_sq_dists(updates);
    let mut active: Vec<usize> = (0..m).collect();
    let mut selection = Vec::with_capacity(m - 2 * h);
    while selection.len() < m - 2 * h {
        let r = active.len();
        let neighbors = r.saturating_sub(h + 2).max(1).min(r - 1);
        let scores = krum_scores(&dists, &active, neighbors);
        let best = rank_by_score(&active, &scores)[0];
        selection.push(active.remove(best));
    }
    Ok(selection)
}

/// Bulyan: Krum-based selection of `m - 2h` updates, then per coordinate the
/// mean of the `m - 4h` selected values closest to the selection's median.
pub fn agg_bulyan(updates: &[UpdateVector], h: usize) -> Result<UpdateVector> {
    let selection = bulyan_selection(updates, h)?;
    let m = updates.len();
    let keep = m - 4 * h;
    let dim = updates[0].dim();
    let mut sorted = vec![0.0; selection.len()];
    let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(selection.len());
    let out = (0..dim)
        .map(|j| {
            for (s, &i) in sorted.iter_mut().zip(&selection) {
                *s = updates[i][j];
            }
            sorted.sort_by(f64::total_cmp);
            let med = median_sorted(&sorted);
            ranked.clear();
            ranked.extend(selection.iter().map(|&i| ((updates[i][j] - med).abs(), i)));
            ranked.sort_by(|a, b| match a.0.total_cmp(&b.0) {
                Ordering::Equal => a.1.cmp(&b.1),
                o => o,
            });
            shifted_mean(ranked[..keep].iter().map(|&(_, i)| updates[i][j]))
        })
        .collect();
    Ok(UpdateVector::from_raw(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vs(rows: &[&[f64]]) -> Vec<UpdateVector> {
        rows.iter().map(|r| UpdateVector::new(r.to_vec()).unwrap()).collect()
    }

    fn line(values: &[f64]) -> Vec<UpdateVector> {
        values.iter().map(|&v| UpdateVector::new(vec![v]).unwrap()).collect()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(agg_mean(&vs(&[&[2.0, 4.0]]), &[7.0]).unwrap().values(), &[2.0, 4.0]);
        assert_eq!(
            agg_mean(&vs(&[&[0.0, 0.0], &[2.0, 2.0]]), &[1.0, 1.0])
                .unwrap()
                .values(),
            &[1.0, 1.0]
        );
        assert_eq!(
            agg_mean(&line(&[1.0, 2.0, 6.0]), &[1.0, 1.0, 2.0]).unwrap().values(),
            &[3.75]
        );
    }

    #[test]
    fn mean_errors_are_distinct() {
        assert_eq!(agg_mean(&[], &[]).unwrap_err(), Error::EmptyInput);
        assert!(matches!(
            agg_mean(&line(&[1.0]), &[1.0, 2.0]).unwrap_err(),
            Error::LengthMismatch { .. }
        ));
        assert_eq!(
            agg_mean(&line(&[1.0, 2.0]), &[0.0, 0.0]).unwrap_err(),
            Error::ZeroWeights
        );
        assert!(matches!(
            agg_mean(&vs(&[&[1.0], &[1.0, 2.0]]), &[1.0, 1.0]).unwrap_err(),
            Error::DimensionMismatch { .. }
        ));
        assert!(matches!(
            agg_mean(&line(&[1.0]), &[-1.0]).unwrap_err(),
            Error::InvalidWeight(_)
        ));
    }

    #[test]
    fn krum_one_dimensional_examples() {
        let input = line(&[0.0, 1.0, 2.0, 4.0, 100.0]);
        assert_eq!(agg_krum(&input, 1, 1).unwrap().values(), &[1.0]);
        // scores 5, 2, 5, 13, 18820: index 1 first, then the tie at 5 goes to index 0
        assert_eq!(krum_select(&input, 1, 2).unwrap(), vec![1, 0]);
        assert_eq!(agg_krum(&input, 1, 2).unwrap().values(), &[0.5]);
    }

    #[test]
    fn krum_rejects_small_inputs() {
        let input = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            agg_krum(&input, 1, 1).unwrap_err(),
            Error::TooFewInputs { rule: "krum", .. }
        ));
        assert!(agg_krum(&input, 0, 4).is_err());
    }

    #[test]
    fn median_examples() {
        assert_eq!(agg_median(&line(&[1.0, 2.0, 3.0])).unwrap().values(), &[2.0]);
        assert_eq!(agg_median(&line(&[1.0, 2.0, 3.0, 100.0])).unwrap().values(), &[2.5]);
        assert_eq!(
            agg_median(&vs(&[&[5.0, -1.0], &[5.0, 0.0], &[5.0, 1.0]]))
                .unwrap()
                .values(),
            &[5.0, 0.0]
        );
        assert_eq!(agg_median(&[]).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn trimmed_mean_examples() {
        let input = line(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(agg_trimmed_mean(&input, 0.2).unwrap().values(), &[3.0]);
        assert_eq!(
            agg_trimmed_mean(&input, 0.0).unwrap(),
            crate::vector::mean_of(&input).unwrap()
        );
        let two = line(&[1.0, 2.0]);
        // floor(0.49 * 2) = 0, nothing trimmed
        assert_eq!(agg_trimmed_mean(&two, 0.49).unwrap().values(), &[1.5]);
        assert!(agg_trimmed_mean(&input, 0.5).is_err());
    }

    #[test]
    fn bulyan_stays_inside_honest_range() {
        let input = line(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 100.0]);
        let out = agg_bulyan(&input, 1).unwrap()[0];
        assert!((0.0..=5.0).contains(&out), "{out}");
        let sel = bulyan_selection(&input, 1).unwrap();
        assert_eq!(sel.len(), 5);
        assert!(!sel.contains(&6));
    }

    #[test]
    fn bulyan_rejects_small_inputs() {
        let input = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(matches!(
            agg_bulyan(&input, 2).unwrap_err(),
            Error::TooFewInputs { rule: "bulyan", .. }
        ));
    }

    #[test]
    fn identical_inputs_are_a_fixed_point() {
        let u: &[f64] = &[0.25, -3.5, 7.0];
        let input = vs(&[u; 12]);
        for rule in AggregationRule::standard_candidates(2)
            .into_iter()
            .chain([AggregationRule::mean()])
        {
            assert_eq!(rule.aggregate(&input, None).unwrap().values(), u, "{}", rule.label());
        }
    }
}
