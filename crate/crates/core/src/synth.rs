//! Seeded simulator of symptom-driven, random and matched enrolment.
//!
//! Each simulated individual has a COVID status `y ~ Bernoulli(π)`,
//! symptoms that depend on `y`, demographics independent of `y`, and a
//! feature vector
//!
//! ```text
//! x = α·y·e₁ + β·g(symptoms, age, gender) + nuisance + N(0, σ²I)
//! ```
//!
//! The true acoustic signature lives only on coordinate 0. `g` embeds the
//! covariates as ±1 codes (age as a standardised value) times unit-norm
//! loading vectors that are drawn once from the seed and have no weight on
//! coordinate 0. The nuisance term adds label-independent variance
//! `nuisance_sd²` on coordinates `1..=nuisance_rank`, standing in for
//! recording conditions that dominate real feature spaces.
//!
//! Enrolment is a collider: under symptom-based recruitment the enrolment
//! probability depends on both symptoms and status, which induces a
//! symptom-status association among the enrolled that the population does
//! not have to the same degree.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Channel, Cohort, DataError, Gender, Manifest, ParticipantRecord, SymptomProfile};
use crate::matching::{match_exact, MatchError, MatchSpec};
use crate::metrics::normal_quantile;
use crate::rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no record was enrolled")]
    EmptyEnrolment,
    #[error("population is empty")]
    EmptyPopulation,
    #[error(transparent)]
    Matching(#[from] MatchError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Enrolment {
    /// Enrolment probability per (symptomatic, label) cell.
    SymptomsBased {
        w_sym_pos: f64,
        w_asym_pos: f64,
        w_sym_neg: f64,
        w_asym_neg: f64,
    },
    /// Everyone enrolled with the same probability.
    Random { p: f64 },
    /// Exact matching on the test-set covariates.
    Matched,
}

impl Enrolment {
    /// Illustrative symptom-driven weights; not calibrated to any study.
    pub fn symptoms_based_default() -> Self {
        Enrolment::SymptomsBased {
            w_sym_pos: 0.9,
            w_asym_pos: 0.1,
            w_sym_neg: 0.3,
            w_asym_neg: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_population: usize,
    pub prevalence: f64,
    pub p_sym_given_pos: f64,
    pub p_sym_given_neg: f64,
    pub enrolment: Enrolment,
    /// α: shift of positives along coordinate 0.
    pub signal_strength: f64,
    /// β: scale of the covariate embedding.
    pub confounder_strength: f64,
    pub feature_dim: usize,
    pub noise_sd: f64,
    pub nuisance_rank: usize,
    pub nuisance_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_population: 20_000,
            prevalence: 0.1,
            p_sym_given_pos: 0.65,
            p_sym_given_neg: 0.20,
            enrolment: Enrolment::symptoms_based_default(),
            signal_strength: 1.0,
            confounder_strength: 1.0,
            feature_dim: 16,
            noise_sd: 1.0,
            nuisance_rank: 4,
            nuisance_sd: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        let unit = |name: &str, v: f64| -> Result<(), SynthError> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthError::InvalidConfig(format!("{name} = {v} is not a probability")))
            }
        };
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad(format!("prevalence = {} is not in (0, 1)", self.prevalence));
        }
        unit("p_sym_given_pos", self.p_sym_given_pos)?;
        unit("p_sym_given_neg", self.p_sym_given_neg)?;
        match self.enrolment {
            Enrolment::SymptomsBased {
                w_sym_pos,
                w_asym_pos,
                w_sym_neg,
                w_asym_neg,
            } => {
                unit("w_sym_pos", w_sym_pos)?;
                unit("w_asym_pos", w_asym_pos)?;
                unit("w_sym_neg", w_sym_neg)?;
                unit("w_asym_neg", w_asym_neg)?;
            }
            Enrolment::Random { p } => unit("p", p)?,
            Enrolment::Matched => {}
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1".into());
        }
        if self.nuisance_rank >= self.feature_dim {
            return bad(format!(
                "nuisance_rank {} must be below feature_dim {}",
                self.nuisance_rank, self.feature_dim
            ));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd = {} must be positive", self.noise_sd));
        }
        for (name, v) in [
            ("signal_strength", self.signal_strength),
            ("confounder_strength", self.confounder_strength),
            ("nuisance_sd", self.nuisance_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be non-negative"));
            }
        }
        Ok(())
    }
}

/// A simulated individual together with the hidden ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub record: ParticipantRecord,
    /// Strength of the true acoustic signature carried by this individual.
    pub latent_signal: f64,
    pub enrolled: bool,
}

/// Number of covariate codes fed to the embedding.
const N_CODES: usize = 11;
const AGE_MIN: u32 = 18;
const AGE_MAX: u32 = 80;

fn covariate_codes(s: &SymptomProfile, age: u32, gender: Gender) -> [f64; N_CODES] {
    let pm = |b: bool| if b { 1.0 } else { -1.0 };
    [
        pm(s.cough),
        pm(s.sore_throat),
        pm(s.asthma),
        pm(s.shortness_of_breath),
        pm(s.runny_blocked_nose),
        pm(s.new_continuous_cough),
        pm(s.any_symptom()),
        pm(s.copd_emphysema),
        pm(s.smoker),
        pm(gender == Gender::Male),
        (age as f64 - 49.0) / 18.0,
    ]
}

fn gauss<R: Rng + ?Sized>(r: &mut R) -> f64 {
    StandardNormal.sample(r)
}

/// Unit-norm loading vector per covariate code, zero on coordinate 0.
fn loadings(dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::seeded(rng::derive(seed, "loadings"));
    (0..N_CODES)
        .map(|_| {
            let mut v = vec![0.0; dim];
            if dim > 1 {
                for x in v.iter_mut().skip(1) {
                    *x = gauss(&mut r);
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.iter_mut().for_each(|x| *x /= norm);
            }
            v
        })
        .collect()
}

/// Feature embedding shared by the cohort and calibration generators.
struct FeatureModel {
    loadings: Vec<Vec<f64>>,
    cfg: SynthConfig,
}

impl FeatureModel {
    fn new(cfg: &SynthConfig) -> Self {
        FeatureModel {
            loadings: loadings(cfg.feature_dim, cfg.seed),
            cfg: cfg.clone(),
        }
    }

    fn features<R: Rng>(&self, r: &mut R, signal: f64, codes: &[f64; N_CODES]) -> Vec<f64> {
        let d = self.cfg.feature_dim;
        let mut x: Vec<f64> = (0..d)
            .map(|_| self.cfg.noise_sd * gauss(&mut *r))
            .collect();
        for j in 1..=self.cfg.nuisance_rank {
            let z = gauss(&mut *r);
            x[j] += self.cfg.nuisance_sd * z;
        }
        x[0] += self.cfg.signal_strength * signal;
        let beta = self.cfg.confounder_strength;
        if beta != 0.0 {
            for (c, l) in codes.iter().zip(&self.loadings) {
                for (xi, li) in x.iter_mut().zip(l) {
                    *xi += beta * c * li;
                }
            }
        }
        x
    }
}

fn sample_symptoms<R: Rng>(r: &mut R, any: bool) -> SymptomProfile {
    let mut s = SymptomProfile::default();
    if any {
        let primary = r.random_range(0..SymptomProfile::ACUTE.len());
        for (k, name) in SymptomProfile::ACUTE.iter().enumerate() {
            let on = k == primary || r.random::<f64>() < 0.25;
            s.set(name, on);
        }
    }
    s.copd_emphysema = r.random::<f64>() < 0.05;
    s.other_respiratory = r.random::<f64>() < 0.08;
    s.smoker = r.random::<f64>() < 0.15;
    s
}

pub fn generate_population(cfg: &SynthConfig) -> Result<Vec<SynthRecord>, SynthError> {
    cfg.validate()?;
    let model = FeatureModel::new(cfg);
    let base = rng::derive(cfg.seed, "population");
    let width = cfg.n_population.max(1).to_string().len();
    Ok((0..cfg.n_population)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(base, i as u64);
            let label = r.random::<f64>() < cfg.prevalence;
            let p_sym = if label { cfg.p_sym_given_pos } else { cfg.p_sym_given_neg };
            let any = r.random::<f64>() < p_sym;
            let symptoms = sample_symptoms(&mut r, any);
            let age_years = r.random_range(AGE_MIN..=AGE_MAX);
            let gender = if r.random::<bool>() { Gender::Male } else { Gender::Female };
            let latent_signal = if label { 1.0 } else { 0.0 };
            let codes = covariate_codes(&symptoms, age_years, gender);
            let features = model.features(&mut r, latent_signal, &codes);
            let mut record = ParticipantRecord::new(format!("S{i:0width$}"), label);
            record.symptoms = symptoms;
            record.age_years = age_years;
            record.gender = gender;
            record.channel = Channel::Synthetic;
            record.features = Some(features);
            SynthRecord {
                record,
                latent_signal,
                enrolled: false,
            }
        })
        .collect())
}

/// Marks each record as enrolled or not under `cfg.enrolment`.
pub fn enrol_records(pop: &[SynthRecord], cfg: &SynthConfig) -> Result<Vec<SynthRecord>, SynthError> {
    if pop.is_empty() {
        return Err(SynthError::EmptyPopulation);
    }
    let base = rng::derive(cfg.seed, "enrolment");
    let mut out = pop.to_vec();
    match cfg.enrolment {
        Enrolment::SymptomsBased {
            w_sym_pos,
            w_asym_pos,
            w_sym_neg,
            w_asym_neg,
        } => {
            for (i, s) in out.iter_mut().enumerate() {
                let w = match (s.record.symptoms.any_symptom(), s.record.label) {
                    (true, true) => w_sym_pos,
                    (false, true) => w_asym_pos,
                    (true, false) => w_sym_neg,
                    (false, false) => w_asym_neg,
                };
                s.enrolled = rng::stream(base, i as u64).random::<f64>() < w;
            }
        }
        Enrolment::Random { p } => {
            for (i, s) in out.iter_mut().enumerate() {
                s.enrolled = rng::stream(base, i as u64).random::<f64>() < p;
            }
        }
        Enrolment::Matched => {
            let all = Cohort::new(
                pop.iter().map(|s| s.record.clone()).collect(),
                Manifest::new("synthetic population", Some(cfg.seed), pop.len()),
            )?;
            let (matched, _) = match_exact(&all, &MatchSpec::test_set(rng::derive(cfg.seed, "match")))?;
            let keep: std::collections::HashSet<&str> = matched.iter().map(|r| r.id.as_str()).collect();
            for s in out.iter_mut() {
                s.enrolled = keep.contains(s.record.id.as_str());
            }
        }
    }
    if !out.iter().any(|s| s.enrolled) {
        return Err(SynthError::EmptyEnrolment);
    }
    Ok(out)
}

/// The enrolled records as a cohort.
pub fn enrolled_cohort(pop: &[SynthRecord], cfg: &SynthConfig) -> Result<Cohort, SynthError> {
    let records: Vec<ParticipantRecord> = pop.iter().filter(|s| s.enrolled).map(|s| s.record.clone()).collect();
    if records.is_empty() {
        return Err(SynthError::EmptyEnrolment);
    }
    let mut manifest = Manifest::new("synth", Some(cfg.seed), pop.len());
    manifest.steps.push(format!("enrolment: {}", enrolment_name(&cfg.enrolment)));
    Ok(Cohort::new(records, manifest)?)
}

fn enrolment_name(e: &Enrolment) -> &'static str {
    match e {
        Enrolment::SymptomsBased { .. } => "symptoms_based",
        Enrolment::Random { .. } => "random",
        Enrolment::Matched => "matched",
    }
}

pub fn enrol(pop: &[SynthRecord], cfg: &SynthConfig) -> Result<Cohort, SynthError> {
    enrolled_cohort(&enrol_records(pop, cfg)?, cfg)
}

/// Population generation followed by enrolment.
pub fn synth_cohort(cfg: &SynthConfig) -> Result<(Vec<SynthRecord>, Cohort), SynthError> {
    let pop = enrol_records(&generate_population(cfg)?, cfg)?;
    let cohort = enrolled_cohort(&pop, cfg)?;
    Ok((pop, cohort))
}

/// Writes `id,label,latent_signal,enrolled` for every simulated individual.
pub fn write_truth<W: Write>(pop: &[SynthRecord], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "label", "latent_signal", "enrolled"])?;
    for s in pop {
        w.write_record([
            s.record.id.as_str(),
            if s.record.label { "1" } else { "0" },
            &s.latent_signal.to_string(),
            if s.enrolled { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Target Bayes accuracy of the synthetic calibration task.
pub const CALIBRATION_BAYES_ACCURACY: f64 = 0.99;

/// A balanced two-class task in the same feature space as `cfg`'s cohort:
/// the classes differ by a mean shift spread evenly over the nuisance
/// coordinates (the last coordinate when there are none), sized so that the
/// Bayes accuracy ignoring the covariate embedding is 0.99. Covariates are
/// drawn independently of the class.
pub fn calibration_cohort(cfg: &SynthConfig, n: usize, seed: u64) -> Result<Cohort, SynthError> {
    cfg.validate()?;
    let model = FeatureModel::new(cfg);
    let d = cfg.feature_dim;
    let dirs: Vec<usize> = if cfg.nuisance_rank > 0 {
        (1..=cfg.nuisance_rank).collect()
    } else {
        vec![d - 1]
    };
    let sd = if cfg.nuisance_rank > 0 {
        (cfg.noise_sd.powi(2) + cfg.nuisance_sd.powi(2)).sqrt()
    } else {
        cfg.noise_sd
    };
    let separation = 2.0 * normal_quantile(CALIBRATION_BAYES_ACCURACY) * sd;
    let per_coord = separation / 2.0 / (dirs.len() as f64).sqrt();

    let base = rng::derive(seed, "calibration");
    let width = n.max(1).to_string().len();
    let records = (0..n)
        .map(|i| {
            let mut r = rng::stream(base, i as u64);
            let label = i % 2 == 0;
            let any = r.random::<f64>() < 0.4;
            let symptoms = sample_symptoms(&mut r, any);
            let age = r.random_range(AGE_MIN..=AGE_MAX);
            let gender = if r.random::<bool>() { Gender::Male } else { Gender::Female };
            let codes = covariate_codes(&symptoms, age, gender);
            let mut x = model.features(&mut r, 0.0, &codes);
            // the calibration task carries no COVID signal on coordinate 0
            let sign = if label { 1.0 } else { -1.0 };
            for &j in &dirs {
                x[j] += sign * per_coord;
            }
            let mut rec = ParticipantRecord::new(format!("C{i:0width$}"), label);
            rec.symptoms = symptoms;
            rec.age_years = age;
            rec.gender = gender;
            rec.features = Some(x);
            rec
        })
        .collect();
    Ok(Cohort::new(records, Manifest::new("synthetic calibration task", Some(seed), n))?)
}
