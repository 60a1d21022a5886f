//! Participant records, cohorts and their provenance.
//!
//! A [`Cohort`] is the currency passed between every stage of the toolkit.
//! It is immutable once built: every transformation (filtering, splitting,
//! matching, resampling) produces a new cohort with an extended manifest.

mod io;
mod split;
mod validate;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{
    attach_scores_csv, load_cohort, load_features, read_cohort, read_features, write_cohort,
    write_features, ColumnMap, CANONICAL_COLUMNS,
};
pub use split::{split_cohort, SplitSpec};
pub use validate::{
    validate_cohort, FilterSpec, RejectionReport, FILTER_AGE, FILTER_INCONSISTENT,
    FILTER_MISSING_FEATURES, FILTER_MISSING_SCORE,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("bad value in row {row}, column `{column}`: {reason}")]
    BadValue {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("duplicate participant id `{0}`")]
    DuplicateId(String),
    #[error("sidecar id `{0}` is not in the cohort")]
    UnknownId(String),
    #[error("feature dimension mismatch: expected {expected}, found {found} for `{id}`")]
    FeatureDim {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("score {score} of `{id}` is outside [0, 1]")]
    ScoreOutOfRange { id: String, score: f64 },
    #[error("need at least 2 records to split, got {0}")]
    TooFewRecords(usize),
    #[error("train fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl DataError {
    /// Row (1-based data row) and column of a `BadValue` error.
    pub fn bad_value_location(&self) -> Option<(usize, &str)> {
        match self {
            DataError::BadValue { row, column, .. } => Some((*row, column.as_str())),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Other => "other",
        }
    }

    /// Unrecognised values become [`Gender::Other`].
    pub fn parse_lenient(s: &str) -> Gender {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Gender::Male,
            "female" | "f" => Gender::Female,
            _ => Gender::Other,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Recruitment source of a participant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "TT")]
    Tt,
    #[serde(rename = "REACT")]
    React,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl Channel {
    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Tt => "TT",
            Channel::React => "REACT",
            Channel::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "TT" | "tt" => Ok(Channel::Tt),
            "REACT" | "react" => Ok(Channel::React),
            "synthetic" | "SYNTHETIC" => Ok(Channel::Synthetic),
            other => Err(format!("unknown channel `{other}`")),
        }
    }
}

/// Self-reported symptoms and chronic conditions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SymptomProfile {
    pub cough: bool,
    pub sore_throat: bool,
    pub asthma: bool,
    pub shortness_of_breath: bool,
    pub runny_blocked_nose: bool,
    pub new_continuous_cough: bool,
    pub copd_emphysema: bool,
    pub other_respiratory: bool,
    pub smoker: bool,
}

impl SymptomProfile {
    /// Flag names in canonical column order.
    pub const FLAGS: [&'static str; 9] = [
        "cough",
        "sore_throat",
        "asthma",
        "shortness_of_breath",
        "runny_blocked_nose",
        "new_continuous_cough",
        "copd_emphysema",
        "other_respiratory",
        "smoker",
    ];

    /// The six acute flags whose disjunction defines `any_symptom`.
    pub const ACUTE: [&'static str; 6] = [
        "cough",
        "sore_throat",
        "asthma",
        "shortness_of_breath",
        "runny_blocked_nose",
        "new_continuous_cough",
    ];

    pub fn any_symptom(&self) -> bool {
        derive_any_symptom(self)
    }

    /// Looks up a flag by name; `any_symptom` is accepted as a derived flag.
    pub fn get(&self, name: &str) -> Option<bool> {
        Some(match name {
            "cough" => self.cough,
            "sore_throat" => self.sore_throat,
            "asthma" => self.asthma,
            "shortness_of_breath" => self.shortness_of_breath,
            "runny_blocked_nose" => self.runny_blocked_nose,
            "new_continuous_cough" => self.new_continuous_cough,
            "copd_emphysema" => self.copd_emphysema,
            "other_respiratory" => self.other_respiratory,
            "smoker" => self.smoker,
            "any_symptom" => self.any_symptom(),
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: bool) -> bool {
        let slot = match name {
            "cough" => &mut self.cough,
            "sore_throat" => &mut self.sore_throat,
            "asthma" => &mut self.asthma,
            "shortness_of_breath" => &mut self.shortness_of_breath,
            "runny_blocked_nose" => &mut self.runny_blocked_nose,
            "new_continuous_cough" => &mut self.new_continuous_cough,
            "copd_emphysema" => &mut self.copd_emphysema,
            "other_respiratory" => &mut self.other_respiratory,
            "smoker" => &mut self.smoker,
            _ => return false,
        };
        *slot = value;
        true
    }

    /// All nine stored flags in canonical order.
    pub fn flags(&self) -> [bool; 9] {
        [
            self.cough,
            self.sore_throat,
            self.asthma,
            self.shortness_of_breath,
            self.runny_blocked_nose,
            self.new_continuous_cough,
            self.copd_emphysema,
            self.other_respiratory,
            self.smoker,
        ]
    }
}

/// OR over the six acute respiratory flags. Chronic conditions and smoking
/// status do not count as a symptom.
pub fn derive_any_symptom(s: &SymptomProfile) -> bool {
    s.cough
        || s.sore_throat
        || s.asthma
        || s.shortness_of_breath
        || s.runny_blocked_nose
        || s.new_continuous_cough
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub id: String,
    /// COVID status, `true` for positive.
    pub label: bool,
    pub symptoms: SymptomProfile,
    /// `any_symptom` as stored in an input file, if the file carried one.
    /// Only used to detect self-inconsistent rows.
    pub reported_any_symptom: Option<bool>,
    pub age_years: u32,
    pub gender: Gender,
    pub channel: Channel,
    pub other_covariates: BTreeMap<String, String>,
    pub score: Option<f64>,
    pub features: Option<Vec<f64>>,
}

impl ParticipantRecord {
    pub fn new(id: impl Into<String>, label: bool) -> Self {
        ParticipantRecord {
            id: id.into(),
            label,
            symptoms: SymptomProfile::default(),
            reported_any_symptom: None,
            age_years: 18,
            gender: Gender::Other,
            channel: Channel::Synthetic,
            other_covariates: BTreeMap::new(),
            score: None,
            features: None,
        }
    }

    /// Boolean covariate lookup: symptom flags, `any_symptom`, or a 0/1
    /// valued entry of `other_covariates`.
    pub fn boolean_covariate(&self, name: &str) -> Option<bool> {
        if let Some(v) = self.symptoms.get(name) {
            return Some(v);
        }
        match self.other_covariates.get(name)?.trim() {
            "1" | "true" | "True" | "TRUE" | "yes" => Some(true),
            "0" | "false" | "False" | "FALSE" | "no" => Some(false),
            _ => None,
        }
    }
}

/// Provenance attached to every cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Source path or generator description.
    pub source: String,
    pub seed: Option<u64>,
    /// Processing steps applied, oldest first.
    pub steps: Vec<String>,
    pub rows_read: usize,
    pub created_unix: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Manifest {
    pub fn new(source: impl Into<String>, seed: Option<u64>, rows_read: usize) -> Self {
        Manifest {
            source: source.into(),
            seed,
            steps: Vec::new(),
            rows_read,
            created_unix: unix_now(),
            notes: Vec::new(),
        }
    }

    /// A copy of this manifest with one more processing step recorded.
    pub fn with_step(&self, step: impl Into<String>) -> Self {
        let mut m = self.clone();
        m.steps.push(step.into());
        m.created_unix = unix_now();
        m
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Ordered, id-unique collection of participant records.
#[derive(Debug, Clone)]
pub struct Cohort {
    records: Vec<ParticipantRecord>,
    manifest: Manifest,
}

impl Cohort {
    /// Builds a cohort, checking id uniqueness, score range and a shared
    /// feature dimension.
    pub fn new(records: Vec<ParticipantRecord>, manifest: Manifest) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut dim: Option<usize> = None;
        for r in &records {
            if !seen.insert(r.id.as_str()) {
                return Err(DataError::DuplicateId(r.id.clone()));
            }
            if let Some(s) = r.score {
                if !(0.0..=1.0).contains(&s) {
                    return Err(DataError::ScoreOutOfRange {
                        id: r.id.clone(),
                        score: s,
                    });
                }
            }
            if let Some(f) = &r.features {
                match dim {
                    None => dim = Some(f.len()),
                    Some(d) if d != f.len() => {
                        return Err(DataError::FeatureDim {
                            id: r.id.clone(),
                            expected: d,
                            found: f.len(),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(Cohort { records, manifest })
    }

    pub fn records(&self) -> &[ParticipantRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ParticipantRecord> {
        self.records
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParticipantRecord> {
        self.records.iter()
    }

    pub fn n_pos(&self) -> usize {
        self.records.iter().filter(|r| r.label).count()
    }

    pub fn n_neg(&self) -> usize {
        self.records.len() - self.n_pos()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Scores of every record, or `None` if any record is unscored.
    pub fn scores(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.score).collect()
    }

    /// Dimension of the feature vectors, if any record has one.
    pub fn feature_dim(&self) -> Option<usize> {
        self.records
            .iter()
            .find_map(|r| r.features.as_ref().map(Vec::len))
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    /// New cohort holding the records at `indices`, in the given order.
    pub fn select(&self, indices: &[usize], step: impl Into<String>) -> Cohort {
        Cohort {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            manifest: self.manifest.with_step(step),
        }
    }

    /// New cohort with the records kept by `keep`, order preserved.
    pub fn filter(&self, step: impl Into<String>, keep: impl Fn(&ParticipantRecord) -> bool) -> Cohort {
        Cohort {
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
            manifest: self.manifest.with_step(step),
        }
    }

    /// Applies `f` to every record and re-validates the result.
    pub fn map_records(
        &self,
        step: impl Into<String>,
        f: impl FnMut(&mut ParticipantRecord),
    ) -> Result<Cohort, DataError> {
        let mut records = self.records.clone();
        records.iter_mut().for_each(f);
        Cohort::new(records, self.manifest.with_step(step))
    }

    /// Replaces every record's score, in record order.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Cohort, DataError> {
        assert_eq!(scores.len(), self.records.len(), "one score per record");
        let mut it = scores.iter();
        self.map_records("attach scores", |r| r.score = it.next().copied())
    }
}

impl<'a> IntoIterator for &'a Cohort {
    type Item = &'a ParticipantRecord;
    type IntoIter = std::slice::Iter<'a, ParticipantRecord>;

    fn into_iter(self) -> Self::IntoIter {
        self.records.iter()
    }
}
