//! Accuracy, inference and uncertainty statistics.

mod calibration;
mod ci;
mod hypothesis;
mod roc;
mod stratified;
mod table;
mod uncertainty;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use calibration::{calibration_bins, CalibrationBin, CalibrationSummary};
pub use ci::{
    auc_ci, delong_components, delong_test, normal_cdf, normal_quantile, CiMethod, ConfidenceInterval,
    DelongComponents, DelongTest, HanleyMcNeilDetail,
};
pub use hypothesis::{bh_fdr, mwu_test, MwuMode, MwuResult};
pub use roc::{auc, pr_auc, roc_curve, uar, OperatingPoint, RocCurve};
pub use stratified::{stratified_auc, StratumAuc};
pub use table::{phi_from_counts, table_2x2_stats, Table2x2, TableStats};
pub use uncertainty::{uncertainty_decompose, UncertaintySummary};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("both classes must be present")]
    OneClassOnly,
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("no samples")]
    Empty,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("DeLong needs at least 2 samples per class (have {n_pos} positives, {n_neg} negatives)")]
    TooFewSamples { n_pos: usize, n_neg: usize },
    #[error("paired comparison requires identical label sequences")]
    LabelMismatch,
    #[error("empty group")]
    EmptyGroup,
    #[error("exact Mann-Whitney limited to 20 samples, got {0}")]
    TooLargeForExact(usize),
    #[error("2x2 table has a zero marginal")]
    DegenerateTable,
    #[error("2x2 table entries must be finite and non-negative with positive sum")]
    InvalidTable,
    #[error("row {0} is not a probability vector")]
    NotAProbabilityRow(usize),
    #[error("no stratum has at least {0} samples per class")]
    NoEligibleStrata(usize),
    #[error("cohort record `{0}` has no score")]
    MissingScore(String),
    #[error("confidence level {0} is not in (0, 1)")]
    BadLevel(f64),
    #[error(transparent)]
    Matching(#[from] crate::matching::MatchError),
}

/// Aligned scores and binary labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabels {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if scores.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(MetricsError::NonFinite(i));
        }
        Ok(ScoredLabels { scores, labels })
    }

    /// From a scored cohort.
    pub fn from_cohort(c: &crate::data::Cohort) -> Result<Self, MetricsError> {
        let mut scores = Vec::with_capacity(c.len());
        for r in c {
            scores.push(r.score.ok_or_else(|| MetricsError::MissingScore(r.id.clone()))?);
        }
        ScoredLabels::new(scores, c.labels())
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn n_pos(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn n_neg(&self) -> usize {
        self.len() - self.n_pos()
    }

    /// Positive scores and negative scores.
    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (&s, &l) in self.scores.iter().zip(&self.labels) {
            if l {
                pos.push(s)
            } else {
                neg.push(s)
            }
        }
        (pos, neg)
    }

    pub(crate) fn require_both(&self) -> Result<(), MetricsError> {
        let p = self.n_pos();
        if p == 0 || p == self.len() {
            Err(MetricsError::OneClassOnly)
        } else {
            Ok(())
        }
    }

    /// Labels flipped, scores unchanged.
    pub fn flipped(&self) -> ScoredLabels {
        ScoredLabels {
            scores: self.scores.clone(),
            labels: self.labels.iter().map(|l| !l).collect(),
        }
    }
}
