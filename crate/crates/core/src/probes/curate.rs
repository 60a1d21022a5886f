use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{feature_rows, pca_fit, score_vec, train_weak_linear, FitScope, ProbeError, WeakProbeConfig};
use crate::data::Cohort;
use crate::metrics::{auc, uar, ScoredLabels};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakRobustStep {
    pub k: usize,
    /// Weak-model UAR on the matched set it was fitted to.
    pub matched_uar: f64,
    /// Weak-model UAR on the held-out half of the calibration task.
    pub calibration_uar: f64,
    /// Ids first removed at this k.
    pub removed_ids: Vec<String>,
    pub curated_n_pos: usize,
    pub curated_n_neg: usize,
    /// Main-classifier AUC on the records still curated after this k.
    pub curated_auc: Option<f64>,
    pub confounder_attributable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakRobustResult {
    pub baseline_auc: f64,
    pub steps: Vec<WeakRobustStep>,
    /// Smallest k whose calibration UAR exceeded the threshold.
    pub tau: Option<usize>,
    pub threshold: f64,
    pub pca_warning: Option<String>,
}

impl WeakRobustResult {
    pub fn require_tau(&self) -> Result<usize, ProbeError> {
        self.tau.ok_or(ProbeError::CalibrationNeverPasses(self.threshold))
    }

    /// The step at k = τ, i.e. after all confounder-attributable removals.
    pub fn at_tau(&self) -> Option<&WeakRobustStep> {
        self.tau.map(|t| &self.steps[t - 1])
    }
}

/// Stratified half split of the calibration task: (train, eval) indices.
fn calibration_split(labels: &[bool], seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::seeded(rng::derive(seed, "calibration-split"));
    let (mut train, mut eval) = (Vec::new(), Vec::new());
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut r);
        let half = idx.len().div_ceil(2);
        train.extend_from_slice(&idx[..half]);
        eval.extend_from_slice(&idx[half..]);
    }
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

/// Weak-Robust curation. For each k, the matched and calibration records
/// are projected onto the first k principal components of the matched
/// negatives; a weak linear model fitted to the matched set removes every
/// record it classifies correctly from a running curated set. The weak
/// model's predictions are in-sample. τ is the first k whose subspace lets
/// a weak model reach the calibration threshold on held-out calibration
/// data; drops in the main classifier's curated AUC for k ≤ τ point at
/// confounders that a weak model can already read off the features.
pub fn weak_robust_curate(
    matched: &Cohort,
    calibration: &Cohort,
    cfg: &WeakProbeConfig,
) -> Result<WeakRobustResult, ProbeError> {
    let rows = feature_rows(matched)?;
    let scores = score_vec(matched)?;
    let labels = matched.labels();
    if matched.n_pos() == 0 || matched.n_neg() == 0 {
        return Err(ProbeError::OneClassOnly);
    }
    let dim = rows[0].len();
    cfg.validate(dim)?;
    let calib_rows = feature_rows(calibration)?;
    if calib_rows.iter().chain(&rows).any(|r| r.len() != dim) {
        return Err(ProbeError::Ragged);
    }
    let calib_labels = calibration.labels();
    let (c_train, c_eval) = calibration_split(&calib_labels, cfg.seed);
    let has_both = |idx: &[usize]| idx.iter().any(|&i| calib_labels[i]) && idx.iter().any(|&i| !calib_labels[i]);
    if !has_both(&c_train) || !has_both(&c_eval) {
        return Err(ProbeError::OneClassOnly);
    }

    let negatives: Vec<&[f64]> = rows.iter().zip(&labels).filter(|(_, &l)| !l).map(|(r, _)| *r).collect();
    let pca = pca_fit(&negatives, cfg.k_max, FitScope::NegOnly)?;
    let k_used = pca.n_components();
    let proj: Vec<Vec<f64>> = rows.iter().map(|r| pca.transform(r, k_used)).collect();
    let calib_proj: Vec<Vec<f64>> = calib_rows.iter().map(|r| pca.transform(r, k_used)).collect();

    let per_k: Vec<(f64, f64, Vec<bool>)> = (1..=k_used)
        .into_par_iter()
        .map(|k| -> Result<_, ProbeError> {
            let x: Vec<&[f64]> = proj.iter().map(|p| &p[..k]).collect();
            let seed = rng::derive(cfg.seed, &format!("k{k}"));
            let model = train_weak_linear(&x, &labels, seed)?;
            let preds: Vec<bool> = x.iter().map(|v| model.predict(v)).collect();
            let matched_uar = uar(&preds, &labels)?;
            let correct: Vec<bool> = preds.iter().zip(&labels).map(|(p, l)| p == l).collect();

            let ct: Vec<&[f64]> = c_train.iter().map(|&i| &calib_proj[i][..k]).collect();
            let ct_y: Vec<bool> = c_train.iter().map(|&i| calib_labels[i]).collect();
            let cm = train_weak_linear(&ct, &ct_y, seed)?;
            let ce_pred: Vec<bool> = c_eval.iter().map(|&i| cm.predict(&calib_proj[i][..k])).collect();
            let ce_y: Vec<bool> = c_eval.iter().map(|&i| calib_labels[i]).collect();
            Ok((matched_uar, uar(&ce_pred, &ce_y)?, correct))
        })
        .collect::<Result<_, _>>()?;

    let tau = per_k
        .iter()
        .position(|(_, c, _)| *c > cfg.calibration_uar_threshold)
        .map(|i| i + 1);
    let baseline_auc = auc(&ScoredLabels::new(scores.clone(), labels.clone())?)?;
    let mut kept = vec![true; rows.len()];
    let mut steps = Vec::with_capacity(k_used);
    for (k, (matched_uar, calibration_uar, correct)) in per_k.into_iter().enumerate() {
        let k = k + 1;
        let mut removed_ids = Vec::new();
        for (i, c) in correct.iter().enumerate() {
            if *c && kept[i] {
                kept[i] = false;
                removed_ids.push(matched.records()[i].id.clone());
            }
        }
        let (s, l): (Vec<f64>, Vec<bool>) = (0..rows.len()).filter(|&i| kept[i]).map(|i| (scores[i], labels[i])).unzip();
        let curated_n_pos = l.iter().filter(|&&v| v).count();
        let curated_n_neg = l.len() - curated_n_pos;
        let curated_auc = if curated_n_pos > 0 && curated_n_neg > 0 {
            Some(auc(&ScoredLabels::new(s, l)?)?)
        } else {
            None
        };
        steps.push(WeakRobustStep {
            k,
            matched_uar,
            calibration_uar,
            removed_ids,
            curated_n_pos,
            curated_n_neg,
            curated_auc,
            confounder_attributable: tau.is_some_and(|t| k <= t),
        });
    }
    Ok(WeakRobustResult {
        baseline_auc,
        steps,
        tau,
        threshold: cfg.calibration_uar_threshold,
        pca_warning: pca.warning,
    })
}
