use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::data::{Cohort, ParticipantRecord, SymptomProfile};

/// Covariate key under which [`super::hybrid_features`] stores the audio score.
pub const AUDIO_SCORE: &str = "audio_score";

/// Predictors of the symptoms-and-demographics model. The last two are
/// optional and dropped when the data has no such column.
pub const SYMPTOM_PREDICTORS: [&str; 13] = [
    "cough",
    "sore_throat",
    "asthma",
    "shortness_of_breath",
    "runny_blocked_nose",
    "new_continuous_cough",
    "copd_emphysema",
    "other_respiratory",
    "age",
    "gender",
    "smoker",
    "ethnicity",
    "first_language",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Column {
    Flag { name: String },
    Age,
    Gender { levels: Vec<String> },
    Numeric { name: String },
    Categorical { name: String, levels: Vec<String> },
    /// The record's whole feature vector.
    Features { dim: usize },
}

impl Column {
    fn width(&self) -> usize {
        match self {
            Column::Gender { levels } | Column::Categorical { levels, .. } => levels.len(),
            Column::Features { dim } => *dim,
            _ => 1,
        }
    }
}

/// One-hot/numeric encoding learned from a training cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoding {
    pub columns: Vec<Column>,
    /// Predictors dropped because the training data lacked them.
    pub notes: Vec<String>,
}

impl FeatureEncoding {
    /// Learns levels from `train`. Symptom flags, `age` and `gender` always
    /// resolve; other names are looked up in the extra covariates and are
    /// numeric when every value parses as a number, categorical otherwise.
    pub fn fit(train: &Cohort, predictors: &[&str], include_features: bool) -> Result<Self, BaselineError> {
        let mut columns = Vec::new();
        let mut notes = Vec::new();
        for &p in predictors {
            if SymptomProfile::FLAGS.contains(&p) {
                columns.push(Column::Flag { name: p.to_string() });
            } else if p == "age" {
                columns.push(Column::Age);
            } else if p == "gender" {
                let levels: BTreeSet<String> = train.iter().map(|r| r.gender.as_str().to_string()).collect();
                columns.push(Column::Gender {
                    levels: levels.into_iter().collect(),
                });
            } else {
                let values: Vec<&str> = train
                    .iter()
                    .filter_map(|r| r.other_covariates.get(p).map(|v| v.trim()))
                    .collect();
                if values.is_empty() {
                    notes.push(format!("predictor `{p}` absent from training data; dropped"));
                    continue;
                }
                if values.len() == train.len() && values.iter().all(|v| v.parse::<f64>().is_ok_and(f64::is_finite)) {
                    columns.push(Column::Numeric { name: p.to_string() });
                } else {
                    let levels: BTreeSet<String> = values.iter().map(|v| v.to_string()).collect();
                    columns.push(Column::Categorical {
                        name: p.to_string(),
                        levels: levels.into_iter().collect(),
                    });
                }
            }
        }
        if include_features {
            let dim = train.feature_dim().ok_or(BaselineError::NoFeatures)?;
            columns.push(Column::Features { dim });
        }
        if columns.is_empty() {
            return Err(BaselineError::EncodingMismatch("no usable predictor".into()));
        }
        Ok(FeatureEncoding { columns, notes })
    }

    /// The symptoms-and-demographics predictor set.
    pub fn symptoms(train: &Cohort) -> Result<Self, BaselineError> {
        Self::fit(train, &SYMPTOM_PREDICTORS, false)
    }

    pub fn width(&self) -> usize {
        self.columns.iter().map(Column::width).sum()
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.width());
        for c in &self.columns {
            match c {
                Column::Flag { name } | Column::Numeric { name } => out.push(name.clone()),
                Column::Age => out.push("age".into()),
                Column::Gender { levels } => out.extend(levels.iter().map(|l| format!("gender={l}"))),
                Column::Categorical { name, levels } => out.extend(levels.iter().map(|l| format!("{name}={l}"))),
                Column::Features { dim } => out.extend((0..*dim).map(|i| format!("f{i}"))),
            }
        }
        out
    }

    /// Unknown categorical levels encode as an all-zero block.
    pub fn encode(&self, r: &ParticipantRecord) -> Result<Vec<f64>, BaselineError> {
        let mut out = Vec::with_capacity(self.width());
        let one_hot = |out: &mut Vec<f64>, levels: &[String], v: Option<&str>| {
            out.extend(levels.iter().map(|l| if Some(l.as_str()) == v { 1.0 } else { 0.0 }));
        };
        for c in &self.columns {
            match c {
                Column::Flag { name } => out.push(if r.symptoms.get(name) == Some(true) { 1.0 } else { 0.0 }),
                Column::Age => out.push(f64::from(r.age_years)),
                Column::Gender { levels } => one_hot(&mut out, levels, Some(r.gender.as_str())),
                Column::Categorical { name, levels } => {
                    one_hot(&mut out, levels, r.other_covariates.get(name).map(|v| v.trim()))
                }
                Column::Numeric { name } => {
                    let v = r
                        .other_covariates
                        .get(name)
                        .and_then(|v| v.trim().parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            BaselineError::EncodingMismatch(format!("record `{}` has no numeric `{name}`", r.id))
                        })?;
                    out.push(v);
                }
                Column::Features { dim } => match &r.features {
                    Some(f) if f.len() == *dim => out.extend_from_slice(f),
                    Some(f) => {
                        return Err(BaselineError::EncodingMismatch(format!(
                            "record `{}` has {} features, model expects {dim}",
                            r.id,
                            f.len()
                        )))
                    }
                    None => {
                        return Err(BaselineError::EncodingMismatch(format!("record `{}` has no feature vector", r.id)))
                    }
                },
            }
        }
        Ok(out)
    }

    pub fn encode_cohort(&self, c: &Cohort) -> Result<Vec<Vec<f64>>, BaselineError> {
        c.iter().map(|r| self.encode(r)).collect()
    }
}
