//! Unmeasured-confounder probes: PCA fitted on negatives, a weak linear
//! classifier, Weak-Robust curation and nearest-neighbour substitution.

mod curate;
mod nn;
mod pca;
mod weak;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::MetricsError;

pub use curate::{weak_robust_curate, WeakRobustResult, WeakRobustStep};
pub use nn::{nn_substitute, NnResult, Rescore};
pub use pca::{pca_fit, FitScope, PcaModel};
pub use weak::{train_weak_linear, WeakModel, SVM_C};

#[derive(Debug, Error, PartialEq)]
pub enum ProbeError {
    #[error("need at least {needed} records to fit, have {have}")]
    TooFewRecords { needed: usize, have: usize },
    #[error("non-finite feature in row {0}")]
    NonFinite(usize),
    #[error("feature rows have inconsistent length")]
    Ragged,
    #[error("record `{0}` has no feature vector")]
    MissingFeatures(String),
    #[error("record `{0}` has no score")]
    MissingScore(String),
    #[error("both classes must be present")]
    OneClassOnly,
    #[error("no negative record to substitute from")]
    NoNegatives,
    #[error("calibration UAR never exceeded {0}; no k is confounder-attributable")]
    CalibrationNeverPasses(f64),
    #[error("invalid probe config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    Euclidean,
    Manhattan,
}

impl std::str::FromStr for Distance {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(Distance::Euclidean),
            "manhattan" => Ok(Distance::Manhattan),
            _ => Err(format!("unknown distance `{s}` (expected euclidean or manhattan)")),
        }
    }
}

impl Distance {
    /// Monotone in the true distance; Euclidean skips the square root.
    pub(crate) fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Distance::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakProbeConfig {
    /// Largest number of principal components tried.
    pub k_max: usize,
    /// A subspace counts as expressive once the weak model's calibration
    /// UAR exceeds this.
    pub calibration_uar_threshold: f64,
    pub seed: u64,
    pub distance: Distance,
    /// NN search in the top components of the negatives instead of the raw
    /// feature space.
    pub nn_components: Option<usize>,
    /// Post-substitution AUC must exceed 0.5 by this much to raise the flag.
    pub nn_auc_margin: f64,
    /// Minimum share of positives with a distinct neighbour for the flag.
    pub nn_min_distinct_fraction: f64,
}

impl Default for WeakProbeConfig {
    fn default() -> Self {
        WeakProbeConfig {
            k_max: 10,
            calibration_uar_threshold: 0.8,
            seed: 0,
            distance: Distance::Euclidean,
            nn_components: None,
            nn_auc_margin: 0.05,
            nn_min_distinct_fraction: 0.1,
        }
    }
}

impl WeakProbeConfig {
    pub fn validate(&self, feature_dim: usize) -> Result<(), ProbeError> {
        if self.k_max == 0 || self.k_max > feature_dim {
            return Err(ProbeError::InvalidConfig(format!(
                "k_max {} must be in 1..={feature_dim}",
                self.k_max
            )));
        }
        let t = self.calibration_uar_threshold;
        if !(t > 0.5 && t < 1.0) {
            return Err(ProbeError::InvalidConfig(format!(
                "calibration_uar_threshold {t} must be in (0.5, 1)"
            )));
        }
        self.validate_nn(feature_dim)
    }

    /// Only the settings the NN probe reads.
    pub fn validate_nn(&self, feature_dim: usize) -> Result<(), ProbeError> {
        if let Some(k) = self.nn_components {
            if k == 0 || k > feature_dim {
                return Err(ProbeError::InvalidConfig(format!("nn_components {k} must be in 1..={feature_dim}")));
            }
        }
        if !(0.0..=1.0).contains(&self.nn_min_distinct_fraction) || self.nn_auc_margin.is_nan() || self.nn_auc_margin < 0.0 {
            return Err(ProbeError::InvalidConfig("NN flag thresholds out of range".into()));
        }
        Ok(())
    }
}

/// Feature rows of a cohort, failing on the first record without one.
pub(crate) fn feature_rows(c: &crate::data::Cohort) -> Result<Vec<&[f64]>, ProbeError> {
    c.iter()
        .map(|r| r.features.as_deref().ok_or_else(|| ProbeError::MissingFeatures(r.id.clone())))
        .collect()
}

pub(crate) fn score_vec(c: &crate::data::Cohort) -> Result<Vec<f64>, ProbeError> {
    c.iter()
        .map(|r| r.score.ok_or_else(|| ProbeError::MissingScore(r.id.clone())))
        .collect()
}
