//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use fedbox::theory::TheoryInputs;
use fedbox::UpdateVector;

pub fn uv(values: &[f64]) -> UpdateVector {
    UpdateVector::new(values.to_vec()).unwrap()
}

pub fn rows(updates: &[UpdateVector]) -> Vec<Vec<f64>> {
    updates.iter().map(|u| u.values().to_vec()).collect()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// All `size`-element subsets of `items`.
pub fn subsets(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    if size == 0 {
        return vec![vec![]];
    }
    if items.len() < size {
        return vec![];
    }
    let mut out = Vec::new();
    for mut rest in subsets(&items[1..], size - 1) {
        rest.insert(0, items[0]);
        out.push(rest);
    }
    out.extend(subsets(&items[1..], size));
    out
}

/// Krum score of `i` within `active`: the minimum over all neighbour sets of
/// the summed squared distances.
fn brute_score(x: &[Vec<f64>], active: &[usize], i: usize, neighbors: usize) -> f64 {
    let others: Vec<usize> = active.iter().copied().filter(|&j| j != i).collect();
    subsets(&others, neighbors)
        .iter()
        .map(|s| s.iter().map(|&j| dist2(&x[i], &x[j])).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// Pops the lowest-score member of `active`, lower index first on ties.
fn pop_best(x: &[Vec<f64>], active: &mut Vec<usize>, neighbors: usize) -> usize {
    let scores: Vec<f64> = active.iter().map(|&i| brute_score(x, active, i, neighbors)).collect();
    let mut best = 0;
    for p in 1..active.len() {
        if scores[p] < scores[best] || (scores[p] == scores[best] && active[p] < active[best]) {
            best = p;
        }
    }
    active.remove(best)
}

pub fn krum_select(x: &[Vec<f64>], h: usize, k: usize) -> Vec<usize> {
    let m = x.len();
    let all: Vec<usize> = (0..m).collect();
    let scores: Vec<f64> = all.iter().map(|&i| brute_score(x, &all, i, m - h - 2)).collect();
    let mut chosen = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..m {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|b| scores[i] < scores[b]) {
                best = Some(i);
            }
        }
        chosen.push(best.unwrap());
    }
    chosen
}

fn column(x: &[Vec<f64>], members: &[usize], j: usize) -> Vec<f64> {
    members.iter().map(|&i| x[i][j]).collect()
}

/// The `r`-th smallest value (0-based), found by rank counting.
pub fn order_stat(values: &[f64], r: usize) -> f64 {
    for &v in values {
        let below = values.iter().filter(|&&u| u < v).count();
        let at_most = values.iter().filter(|&&u| u <= v).count();
        if below <= r && r < at_most {
            return v;
        }
    }
    unreachable!("rank {r} out of range")
}

pub fn median_1d(values: &[f64]) -> f64 {
    let n = values.len();
    if n % 2 == 1 {
        order_stat(values, n / 2)
    } else {
        (order_stat(values, n / 2 - 1) + order_stat(values, n / 2)) / 2.0
    }
}

fn plain_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn krum(x: &[Vec<f64>], h: usize, k: usize) -> Vec<f64> {
    let chosen = krum_select(x, h, k);
    (0..x[0].len()).map(|j| plain_mean(&column(x, &chosen, j))).collect()
}

pub fn median(x: &[Vec<f64>]) -> Vec<f64> {
    let all: Vec<usize> = (0..x.len()).collect();
    (0..x[0].len()).map(|j| median_1d(&column(x, &all, j))).collect()
}

pub fn trimmed_mean(x: &[Vec<f64>], beta: f64) -> Vec<f64> {
    let m = x.len();
    let t = (beta * m as f64).floor() as usize;
    let all: Vec<usize> = (0..m).collect();
    (0..x[0].len())
        .map(|j| {
            let col = column(x, &all, j);
            let kept: Vec<f64> = (t..m - t).map(|r| order_stat(&col, r)).collect();
            plain_mean(&kept)
        })
        .collect()
}

pub fn bulyan_select(x: &[Vec<f64>], h: usize) -> Vec<usize> {
    let m = x.len();
    let mut active: Vec<usize> = (0..m).collect();
    let mut selection = Vec::new();
    while selection.len() < m - 2 * h {
        let r = active.len();
        let neighbors = if r > h + 2 { r - h - 2 } else { 1 }.min(r - 1);
        selection.push(pop_best(x, &mut active, neighbors));
    }
    selection
}

pub fn bulyan(x: &[Vec<f64>], h: usize) -> Vec<f64> {
    let selection = bulyan_select(x, h);
    let keep = x.len() - 4 * h;
    (0..x[0].len())
        .map(|j| {
            let col = column(x, &selection, j);
            let med = median_1d(&col);
            let kept: Vec<f64> = selection
                .iter()
                .filter(|&&i| {
                    let di = (x[i][j] - med).abs();
                    let closer = selection
                        .iter()
                        .filter(|&&l| {
                            let dl = (x[l][j] - med).abs();
                            dl < di || (dl == di && l < i)
                        })
                        .count();
                    closer < keep
                })
                .map(|&i| x[i][j])
                .collect();
            plain_mean(&kept)
        })
        .collect()
}

/// Straight-line learning rate of the convergence theorem.
pub fn eta_reference(t: &TheoryInputs) -> (f64, f64) {
    let l = t.l;
    let kh = t.k as f64 - t.h_m as f64;
    let top = 32.0 * l * t.f0_gap + (6.0 + 10.0 / kh) * t.g_l2 + 7.0 * t.g_g2;
    let bottom = 8.0 * l * t.t as f64 * (80.0 * l * (t.g_l2 / kh + t.g_g2) + 240.0 * l * t.expected_alpha * t.g_l2);
    let eta = if bottom == 0.0 {
        1.0 / (8.0 * l)
    } else {
        f64::min((top / bottom).sqrt(), 1.0 / (8.0 * l))
    };
    (eta, 1.0 - 8.0 * l * eta)
}

/// Straight-line right-hand side of the convergence bound.
pub fn bound_reference(t: &TheoryInputs) -> f64 {
    let l = t.l;
    let kh = t.k as f64 - t.h_m as f64;
    let tt = t.t as f64;
    let a = 32.0 * l * t.f0_gap / tt;
    let b = (6.0 * t.g_l2 / kh + 3.0 * t.g_g2) / tt;
    let c = 2.0 * t.grad0_sq / tt;
    let d = 15.0 * t.expected_alpha * t.g_g2;
    let e1 = (32.0 * l * t.f0_gap + (6.0 + 10.0 / kh) * t.g_l2 + 7.0 * t.g_g2).sqrt();
    let e2 = ((640.0 * l * l * (t.g_l2 / kh + t.g_g2) + 1920.0 * l * l * t.expected_alpha * t.g_l2) / tt).sqrt();
    a + b + c + d + e1 * e2
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
