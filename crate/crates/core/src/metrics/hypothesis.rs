use serde::{Deserialize, Serialize};

use super::{normal_cdf, MetricsError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MwuMode {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// U statistic of the first group: pairs it wins plus half the ties.
    pub u: f64,
    /// Two-sided p-value.
    pub p: f64,
}

pub const EXACT_LIMIT: usize = 20;

/// Midranks (1-based) of the pooled sample and the tie-group sizes.
fn midranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..pooled.len()).collect();
    idx.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && pooled[idx[j + 1]] == pooled[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided Mann-Whitney U test. `exact` enumerates every assignment of
/// the pooled midranks to the first group; `normal` uses the tie-corrected
/// variance with a continuity correction.
pub fn mwu_test(pos: &[f64], neg: &[f64], mode: MwuMode) -> Result<MwuResult, MetricsError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::EmptyGroup);
    }
    let m = pos.len();
    let n = neg.len();
    let total = m + n;
    if mode == MwuMode::Exact && total > EXACT_LIMIT {
        return Err(MetricsError::TooLargeForExact(total));
    }
    let pooled: Vec<f64> = pos.iter().chain(neg).copied().collect();
    let (ranks, ties) = midranks(&pooled);
    let offset = (m * (m + 1)) as f64 / 2.0;
    let r1: f64 = ranks[..m].iter().sum();
    let u = r1 - offset;
    let mu = (m * n) as f64 / 2.0;
    let dev = (u - mu).abs();

    let p = match mode {
        MwuMode::Exact => {
            let mut extreme = 0u64;
            let mut count = 0u64;
            let tol = 1e-9 * (1.0 + mu);
            enumerate_rank_sums(&ranks, m, &mut |rank_sum| {
                count += 1;
                if ((rank_sum - offset) - mu).abs() >= dev - tol {
                    extreme += 1;
                }
            });
            extreme as f64 / count as f64
        }
        MwuMode::Normal => {
            let nf = total as f64;
            let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (nf * (nf - 1.0));
            let var = (m * n) as f64 / 12.0 * ((nf + 1.0) - tie_term);
            if var <= 0.0 {
                1.0
            } else {
                let z = ((dev - 0.5).max(0.0)) / var.sqrt();
                (2.0 * (1.0 - normal_cdf(z))).min(1.0)
            }
        }
    };
    Ok(MwuResult { u, p })
}

/// Calls `f` with the rank sum of every size-`k` subset of `ranks`.
fn enumerate_rank_sums(ranks: &[f64], k: usize, f: &mut impl FnMut(f64)) {
    fn go(ranks: &[f64], start: usize, left: usize, acc: f64, f: &mut impl FnMut(f64)) {
        if left == 0 {
            f(acc);
            return;
        }
        for i in start..=ranks.len() - left {
            go(ranks, i + 1, left - 1, acc + ranks[i], f);
        }
    }
    go(ranks, 0, k, 0.0, f);
}

/// Benjamini-Hochberg step-up procedure at FDR level `q`. Returns reject
/// flags in the input order.
pub fn bh_fdr(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let k_star = order
        .iter()
        .enumerate()
        .filter(|&(k, &i)| p_values[i] <= (k + 1) as f64 * q / m as f64)
        .map(|(k, _)| k + 1)
        .max()
        .unwrap_or(0);
    let mut reject = vec![false; m];
    for &i in &order[..k_star] {
        reject[i] = true;
    }
    reject
}
