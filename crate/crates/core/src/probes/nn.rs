use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{feature_rows, pca_fit, score_vec, FitScope, ProbeError, WeakProbeConfig};
use crate::data::Cohort;
use crate::metrics::{auc, ScoredLabels};

/// How a substituted positive gets its new score.
pub enum Rescore<'a> {
    /// Take the neighbour's score as is.
    CopyNeighbourScore,
    /// Score the substituted feature vector.
    Model(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NnResult {
    /// (positive id, neighbour id) for every positive, in cohort order.
    pub substitution: Vec<(String, String)>,
    pub distinct_neighbours: usize,
    pub pre_auc: f64,
    pub post_auc: f64,
    /// Signal survives inside the negative span and is spread over many
    /// neighbours.
    pub attribution_flag: bool,
    #[serde(skip)]
    pub cohort: Option<Cohort>,
}

/// Replaces each positive's features and score with those of its nearest
/// negative (lowest index on ties) and recomputes the AUC. Negatives are
/// left untouched.
pub fn nn_substitute(matched: &Cohort, cfg: &WeakProbeConfig, rescore: Rescore<'_>) -> Result<NnResult, ProbeError> {
    let rows = feature_rows(matched)?;
    let scores = score_vec(matched)?;
    let labels = matched.labels();
    let neg_idx: Vec<usize> = (0..rows.len()).filter(|&i| !labels[i]).collect();
    if neg_idx.is_empty() {
        return Err(ProbeError::NoNegatives);
    }
    if matched.n_pos() == 0 {
        return Err(ProbeError::OneClassOnly);
    }
    let dim = rows[0].len();
    if rows.iter().any(|r| r.len() != dim) {
        return Err(ProbeError::Ragged);
    }
    cfg.validate_nn(dim)?;

    let space: Vec<Vec<f64>> = match cfg.nn_components {
        Some(k) => {
            let negs: Vec<&[f64]> = neg_idx.iter().map(|&i| rows[i]).collect();
            let pca = pca_fit(&negs, k, FitScope::NegOnly)?;
            let k = pca.n_components();
            rows.iter().map(|r| pca.transform(r, k)).collect()
        }
        None => rows.iter().map(|r| r.to_vec()).collect(),
    };

    let pos_idx: Vec<usize> = (0..rows.len()).filter(|&i| labels[i]).collect();
    let nearest: Vec<usize> = pos_idx
        .par_iter()
        .map(|&p| {
            let mut best = neg_idx[0];
            let mut best_d = f64::INFINITY;
            for &n in &neg_idx {
                let d = cfg.distance.eval(&space[p], &space[n]);
                if d < best_d {
                    best_d = d;
                    best = n;
                }
            }
            best
        })
        .collect();

    let mut new_scores = scores.clone();
    let mut new_records = matched.records().to_vec();
    for (&p, &n) in pos_idx.iter().zip(&nearest) {
        let features = rows[n].to_vec();
        new_scores[p] = match rescore {
            Rescore::CopyNeighbourScore => scores[n],
            Rescore::Model(f) => f(&features),
        };
        new_records[p].features = Some(features);
        new_records[p].score = Some(new_scores[p]);
    }
    let pre_auc = auc(&ScoredLabels::new(scores, labels.clone())?)?;
    let post_auc = auc(&ScoredLabels::new(new_scores, labels)?)?;
    let distinct_neighbours = nearest.iter().collect::<BTreeSet<_>>().len();
    let distinct_fraction = distinct_neighbours as f64 / pos_idx.len() as f64;
    let attribution_flag =
        post_auc > 0.5 + cfg.nn_auc_margin && distinct_neighbours > 1 && distinct_fraction >= cfg.nn_min_distinct_fraction;
    let substitution = pos_idx
        .iter()
        .zip(&nearest)
        .map(|(&p, &n)| (matched.records()[p].id.clone(), matched.records()[n].id.clone()))
        .collect();
    let manifest = matched.manifest().with_step(format!("nn substitution ({:?})", cfg.distance));
    let cohort = Cohort::new(new_records, manifest).ok();
    Ok(NnResult {
        substitution,
        distinct_neighbours,
        pre_auc,
        post_auc,
        attribution_flag,
        cohort,
    })
}
