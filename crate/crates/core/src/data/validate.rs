use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Cohort, ParticipantRecord};

/// Which exclusion filters to apply. Filters run in declaration order and a
/// record is counted against the first one it fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    /// Reject records younger than this. `None` disables the filter.
    pub min_age: Option<u32>,
    pub reject_inconsistent_symptoms: bool,
    pub require_score: bool,
    pub require_features: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            min_age: Some(18),
            reject_inconsistent_symptoms: true,
            require_score: false,
            require_features: false,
        }
    }
}

pub const FILTER_AGE: &str = "age<18";
pub const FILTER_INCONSISTENT: &str = "self_inconsistent_symptoms";
pub const FILTER_MISSING_SCORE: &str = "missing_score";
pub const FILTER_MISSING_FEATURES: &str = "missing_features";

/// Per-filter rejection counts plus the ids rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub counts: BTreeMap<String, usize>,
    pub rejected: Vec<(String, String)>,
}

impl RejectionReport {
    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn total(&self) -> usize {
        self.rejected.len()
    }
}

impl FilterSpec {
    fn first_failure(&self, r: &ParticipantRecord) -> Option<&'static str> {
        if let Some(min) = self.min_age {
            if r.age_years < min {
                return Some(FILTER_AGE);
            }
        }
        if self.reject_inconsistent_symptoms {
            if let Some(stored) = r.reported_any_symptom {
                if stored != r.symptoms.any_symptom() {
                    return Some(FILTER_INCONSISTENT);
                }
            }
        }
        if self.require_score && r.score.is_none() {
            return Some(FILTER_MISSING_SCORE);
        }
        if self.require_features && r.features.is_none() {
            return Some(FILTER_MISSING_FEATURES);
        }
        None
    }
}

/// Drops records failing any enabled filter. Idempotent.
pub fn validate_cohort(c: &Cohort, filters: &FilterSpec) -> (Cohort, RejectionReport) {
    let mut report = RejectionReport::default();
    let mut keep = Vec::with_capacity(c.len());
    for (i, r) in c.iter().enumerate() {
        match filters.first_failure(r) {
            Some(name) => {
                *report.counts.entry(name.to_string()).or_default() += 1;
                report.rejected.push((r.id.clone(), name.to_string()));
            }
            None => keep.push(i),
        }
    }
    let step = format!("validate ({} rejected)", report.total());
    (c.select(&keep, step), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Manifest;

    fn rec(id: &str, age: u32) -> ParticipantRecord {
        let mut r = ParticipantRecord::new(id, false);
        r.age_years = age;
        r
    }

    fn cohort(recs: Vec<ParticipantRecord>) -> Cohort {
        let n = recs.len();
        Cohort::new(recs, Manifest::new("t", None, n)).unwrap()
    }

    #[test]
    fn minor_is_rejected() {
        let c = cohort(vec![rec("a", 17), rec("b", 18), rec("c", 60)]);
        let (out, report) = validate_cohort(&c, &FilterSpec::default());
        assert_eq!(out.ids(), vec!["b", "c"]);
        assert_eq!(report.counts.get(FILTER_AGE), Some(&1));
        assert_eq!(report.rejected, vec![("a".to_string(), FILTER_AGE.to_string())]);
    }

    #[test]
    fn valid_cohort_unchanged() {
        let c = cohort(vec![rec("a", 30), rec("b", 40)]);
        let (out, report) = validate_cohort(&c, &FilterSpec::default());
        assert_eq!(out.ids(), c.ids());
        assert!(report.is_empty());
        assert!(report.counts.is_empty());
    }

    #[test]
    fn stored_any_symptom_without_flags_is_inconsistent() {
        let mut bad = rec("bad", 30);
        bad.reported_any_symptom = Some(true);
        let mut good = rec("good", 30);
        good.reported_any_symptom = Some(true);
        good.symptoms.cough = true;
        let c = cohort(vec![bad, good]);
        let (out, report) = validate_cohort(&c, &FilterSpec::default());
        assert_eq!(out.ids(), vec!["good"]);
        assert_eq!(report.counts.get(FILTER_INCONSISTENT), Some(&1));
    }

    #[test]
    fn idempotent() {
        let mut r = rec("x", 25);
        r.reported_any_symptom = Some(true);
        let c = cohort(vec![rec("a", 12), r, rec("b", 33)]);
        let f = FilterSpec { require_score: true, ..Default::default() };
        let (once, _) = validate_cohort(&c, &f);
        let (twice, second) = validate_cohort(&once, &f);
        assert_eq!(once.ids(), twice.ids());
        assert!(second.is_empty());
    }
}
