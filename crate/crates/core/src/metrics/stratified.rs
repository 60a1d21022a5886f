//! Per-stratum AUC with DeLong intervals, Mann-Whitney p-values and
//! Benjamini-Hochberg control across strata.

use serde::{Deserialize, Serialize};

use super::{auc_ci, bh_fdr, mwu_test, CiMethod, ConfidenceInterval, MetricsError, MwuMode, ScoredLabels};
use crate::data::Cohort;
use super::hypothesis::EXACT_LIMIT as EXACT_MWU_LIMIT;
use crate::matching::{group_by_stratum, MatchSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumAuc {
    pub key: String,
    pub n_pos: usize,
    pub n_neg: usize,
    pub auc: f64,
    pub ci: ConfidenceInterval,
    pub mwu_p: f64,
    pub fdr_reject: bool,
}

/// Strata with fewer than `min_per_class` records of either class are
/// skipped. Output is sorted by stratum size, largest first (ties by key).
pub fn stratified_auc(c: &Cohort, spec: &MatchSpec, min_per_class: usize, q: f64) -> Result<Vec<StratumAuc>, MetricsError> {
    let scores: Vec<f64> = c
        .iter()
        .map(|r| r.score.ok_or_else(|| MetricsError::MissingScore(r.id.clone())))
        .collect::<Result<_, _>>()?;
    let strata = group_by_stratum(c, spec)?;

    let mut out = Vec::new();
    for (key, (pos, neg)) in &strata {
        if pos.len() < min_per_class.max(1) || neg.len() < min_per_class.max(1) {
            continue;
        }
        let ps: Vec<f64> = pos.iter().map(|&i| scores[i]).collect();
        let ns: Vec<f64> = neg.iter().map(|&i| scores[i]).collect();
        let d = ScoredLabels::new(
            ps.iter().chain(&ns).copied().collect(),
            std::iter::repeat(true).take(ps.len()).chain(std::iter::repeat(false).take(ns.len())).collect(),
        )?;
        let ci = auc_ci(&d, CiMethod::Delong, 0.95)?;
        let mode = if ps.len() + ns.len() <= EXACT_MWU_LIMIT { MwuMode::Exact } else { MwuMode::Normal };
        let mwu = mwu_test(&ps, &ns, mode)?;
        out.push(StratumAuc {
            key: key.describe(spec),
            n_pos: ps.len(),
            n_neg: ns.len(),
            auc: ci.estimate,
            ci,
            mwu_p: mwu.p,
            fdr_reject: false,
        });
    }
    if out.is_empty() {
        return Err(MetricsError::NoEligibleStrata(min_per_class));
    }
    let ps: Vec<f64> = out.iter().map(|s| s.mwu_p).collect();
    for (s, r) in out.iter_mut().zip(bh_fdr(&ps, q)) {
        s.fdr_reject = r;
    }
    out.sort_by(|a, b| (b.n_pos + b.n_neg).cmp(&(a.n_pos + a.n_neg)).then_with(|| a.key.cmp(&b.key)));
    Ok(out)
}
