//! Exact stratified matching.
//!
//! Records are grouped by a [`StratumKey`] built from recruitment channel,
//! 10-year age bin, gender and a list of boolean covariates. Within each
//! stratum the majority class is uniformly downsampled to the size of the
//! minority class, so the output carries the same number of positives and
//! negatives in every stratum and class becomes independent of every
//! function of the key.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Channel, Cohort, Gender, ParticipantRecord};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum MatchError {
    #[error("record `{id}` has no boolean covariate `{name}`")]
    MissingCovariate { id: String, name: String },
    #[error("match spec lists no covariates")]
    NoCovariates,
    #[error("cannot match an empty cohort")]
    EmptyCohort,
    #[error("every stratum lacks one of the classes; nothing left after matching")]
    EmptyResult,
    #[error("record `{0}` appears in both cohorts")]
    Overlap(String),
}

/// First age of the youngest bin.
pub const AGE_BIN_START: u32 = 18;
pub const AGE_BIN_WIDTH: u32 = 10;
/// Number of bins; the last one is open-ended (78+).
pub const AGE_BIN_COUNT: u32 = 7;

/// 10-year age bin index anchored at 18; ages of 78 and over share the final
/// bin. Ages below 18 fall into bin 0 so the mapping stays total.
pub fn age_bin(age: u32) -> u32 {
    (age.saturating_sub(AGE_BIN_START) / AGE_BIN_WIDTH).min(AGE_BIN_COUNT - 1)
}

pub fn age_bin_label(bin: u32) -> String {
    let lo = AGE_BIN_START + bin * AGE_BIN_WIDTH;
    if bin + 1 >= AGE_BIN_COUNT {
        format!("{lo}+")
    } else {
        format!("{}-{}", lo, lo + AGE_BIN_WIDTH - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub channel: Option<Channel>,
    pub age_bin: u32,
    pub gender: Gender,
    /// Values of the spec's covariates, in spec order.
    pub covariates: Vec<bool>,
}

impl StratumKey {
    /// Human-readable key with covariate names, e.g.
    /// `TT|28-37|female|cough=1,sore_throat=0`.
    pub fn describe(&self, spec: &MatchSpec) -> String {
        let mut s = String::new();
        if let Some(ch) = self.channel {
            s.push_str(ch.as_str());
            s.push('|');
        }
        s.push_str(&age_bin_label(self.age_bin));
        s.push('|');
        s.push_str(self.gender.as_str());
        s.push('|');
        let cov: Vec<String> = spec
            .covariates
            .iter()
            .zip(&self.covariates)
            .map(|(n, v)| format!("{n}={}", u8::from(*v)))
            .collect();
        s.push_str(&cov.join(","));
        s
    }
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ch = self.channel.map_or("*", Channel::as_str);
        let bits: String = self.covariates.iter().map(|&b| if b { '1' } else { '0' }).collect();
        write!(f, "{ch}|{}|{}|{bits}", age_bin_label(self.age_bin), self.gender)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    pub include_channel: bool,
    pub covariates: Vec<String>,
    pub seed: u64,
}

pub const TEST_SET_COVARIATES: [&str; 6] = [
    "cough",
    "sore_throat",
    "asthma",
    "shortness_of_breath",
    "runny_blocked_nose",
    "any_symptom",
];

pub const TRAIN_SET_COVARIATES: [&str; 7] = [
    "cough",
    "sore_throat",
    "asthma",
    "shortness_of_breath",
    "runny_blocked_nose",
    "copd_emphysema",
    "smoker",
];

impl MatchSpec {
    pub fn new(include_channel: bool, covariates: Vec<String>, seed: u64) -> Result<Self, MatchError> {
        if covariates.is_empty() {
            return Err(MatchError::NoCovariates);
        }
        Ok(MatchSpec {
            include_channel,
            covariates,
            seed,
        })
    }

    /// Covariates used for the matched test set.
    pub fn test_set(seed: u64) -> Self {
        MatchSpec {
            include_channel: true,
            covariates: TEST_SET_COVARIATES.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

    /// Covariates used for the matched training set.
    pub fn train_set(seed: u64) -> Self {
        MatchSpec {
            include_channel: true,
            covariates: TRAIN_SET_COVARIATES.iter().map(|s| s.to_string()).collect(),
            seed,
        }
    }

    /// Looks up a preset by name (`test` or `train`).
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "test" => Some(Self::test_set(seed)),
            "train" => Some(Self::train_set(seed)),
            _ => None,
        }
    }
}

pub fn stratum_key(r: &ParticipantRecord, spec: &MatchSpec) -> Result<StratumKey, MatchError> {
    let covariates = spec
        .covariates
        .iter()
        .map(|name| {
            r.boolean_covariate(name).ok_or_else(|| MatchError::MissingCovariate {
                id: r.id.clone(),
                name: name.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StratumKey {
        channel: spec.include_channel.then_some(r.channel),
        age_bin: age_bin(r.age_years),
        gender: r.gender,
        covariates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumBalance {
    pub key: String,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Records kept per class; zero when the stratum was dropped.
    pub kept_per_class: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// One entry per stratum, in lexicographic key order.
    pub strata: Vec<StratumBalance>,
    pub kept: usize,
    pub dropped: usize,
    pub strata_dropped: usize,
}

/// Groups record indices by stratum key, positives and negatives separately.
pub(crate) fn group_by_stratum(
    c: &Cohort,
    spec: &MatchSpec,
) -> Result<BTreeMap<StratumKey, (Vec<usize>, Vec<usize>)>, MatchError> {
    let mut strata: BTreeMap<StratumKey, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (i, r) in c.iter().enumerate() {
        let entry = strata.entry(stratum_key(r, spec)?).or_default();
        if r.label {
            entry.0.push(i);
        } else {
            entry.1.push(i);
        }
    }
    Ok(strata)
}

/// Balances classes within every stratum by seeded downsampling of the
/// majority class. Strata missing either class are dropped. Output keeps
/// the input record order.
pub fn match_exact(c: &Cohort, spec: &MatchSpec) -> Result<(Cohort, BalanceReport), MatchError> {
    if c.is_empty() {
        return Err(MatchError::EmptyCohort);
    }
    if spec.covariates.is_empty() {
        return Err(MatchError::NoCovariates);
    }
    let strata = group_by_stratum(c, spec)?;

    let mut report = BalanceReport::default();
    let mut keep = Vec::new();
    for (key, (pos, neg)) in &strata {
        let m = pos.len().min(neg.len());
        let label = key.describe(spec);
        if m > 0 {
            let mut rng = rng::seeded(rng::derive(spec.seed, &key.to_string()));
            let (major, minor) = if pos.len() >= neg.len() { (pos, neg) } else { (neg, pos) };
            keep.extend_from_slice(minor);
            keep.extend(index::sample(&mut rng, major.len(), m).into_iter().map(|j| major[j]));
        } else {
            report.strata_dropped += 1;
        }
        let dropped = pos.len() + neg.len() - 2 * m;
        report.kept += 2 * m;
        report.dropped += dropped;
        report.strata.push(StratumBalance {
            key: label,
            n_pos: pos.len(),
            n_neg: neg.len(),
            kept_per_class: m,
            dropped,
        });
    }
    if keep.is_empty() {
        return Err(MatchError::EmptyResult);
    }
    keep.sort_unstable();
    let step = format!("exact match on [{}] (seed {})", spec.covariates.join(","), spec.seed);
    Ok((c.select(&keep, step), report))
}

/// Errors if any id occurs in both cohorts.
pub fn check_disjoint(a: &Cohort, b: &Cohort) -> Result<(), MatchError> {
    let ids: HashSet<&str> = a.iter().map(|r| r.id.as_str()).collect();
    match b.iter().find(|r| ids.contains(r.id.as_str())) {
        Some(r) => Err(MatchError::Overlap(r.id.clone())),
        None => Ok(()),
    }
}
