//! Symptoms-and-demographics random forest and the Symptoms+Audio hybrid.

mod encoding;
mod forest;

use thiserror::Error;

use crate::data::Cohort;

pub use encoding::{Column, FeatureEncoding, AUDIO_SCORE, SYMPTOM_PREDICTORS};
pub use forest::{predict_proba, train_forest, train_symptoms_model, ForestConfig, Node, Tree, TreeEnsemble};

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("both classes must be present")]
    OneClassOnly,
    #[error("encoding mismatch: {0}")]
    EncodingMismatch(String),
    #[error("training cohort has no feature vectors")]
    NoFeatures,
    #[error("record `{0}` has no audio score")]
    MissingScore(String),
    #[error("invalid forest config: {0}")]
    InvalidConfig(String),
    #[error("model (de)serialisation failed: {0}")]
    Serde(String),
}

/// Copies each record's score into the `audio_score` covariate so it can be
/// used as one more predictor.
pub fn hybrid_features(c: &Cohort) -> Result<Cohort, BaselineError> {
    if let Some(r) = c.iter().find(|r| r.score.is_none()) {
        return Err(BaselineError::MissingScore(r.id.clone()));
    }
    c.map_records("hybrid: audio score appended as predictor", |r| {
        let s = r.score.expect("checked above");
        r.other_covariates.insert(AUDIO_SCORE.to_string(), s.to_string());
    })
    .map_err(|e| BaselineError::EncodingMismatch(e.to_string()))
}

/// Symptom predictors plus the audio score.
pub fn hybrid_encoding(train: &Cohort) -> Result<FeatureEncoding, BaselineError> {
    let mut names: Vec<&str> = SYMPTOM_PREDICTORS.to_vec();
    names.push(AUDIO_SCORE);
    FeatureEncoding::fit(train, &names, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Gender, Manifest, ParticipantRecord};
    use crate::metrics::{auc, ScoredLabels};
    use crate::rng;
    use rand::Rng;

    fn auc_of(scores: Vec<f64>, c: &Cohort) -> f64 {
        auc(&ScoredLabels::new(scores, c.labels()).unwrap()).unwrap()
    }

    /// Symptom cohort where cough raises the odds of a positive label, plus
    /// an audio score `signal` times informative.
    fn symptom_cohort(n: usize, seed: u64, signal: f64) -> Cohort {
        let mut r = rng::seeded(seed);
        let records = (0..n)
            .map(|i| {
                let y = r.random::<bool>();
                let mut rec = ParticipantRecord::new(format!("P{i:05}"), y);
                rec.symptoms.cough = r.random::<f64>() < if y { 0.6 } else { 0.3 };
                rec.symptoms.sore_throat = r.random::<f64>() < 0.3;
                rec.symptoms.smoker = r.random::<f64>() < 0.2;
                rec.age_years = r.random_range(18..80);
                rec.gender = if r.random::<bool>() { Gender::Male } else { Gender::Female };
                let noise: f64 = r.random();
                rec.score = Some((signal * if y { 1.0 } else { 0.0 } + noise) / (1.0 + signal));
                rec
            })
            .collect();
        Cohort::new(records, Manifest::new("fixture", Some(seed), n)).unwrap()
    }

    fn flag_cohort(n: usize, seed: u64) -> Cohort {
        let mut r = rng::seeded(seed);
        let records = (0..n)
            .map(|i| {
                let y = r.random::<bool>();
                let mut rec = ParticipantRecord::new(format!("F{i:05}"), y);
                rec.symptoms.cough = y;
                rec.symptoms.asthma = r.random::<bool>();
                rec.age_years = r.random_range(18..80);
                rec
            })
            .collect();
        Cohort::new(records, Manifest::new("fixture", None, n)).unwrap()
    }

    #[test]
    fn separable_stump_oob() {
        let c = flag_cohort(300, 1);
        let enc = FeatureEncoding::fit(&c, &["cough", "asthma", "age"], false).unwrap();
        let m = train_forest(&c, enc, &ForestConfig::default()).unwrap();
        assert!(m.oob_score.unwrap() >= 0.95);
    }

    #[test]
    fn noise_features_chance_auc() {
        for seed in 0..50 {
            let mut r = rng::seeded(seed);
            let mut make = |n: usize, tag: &str| {
                let records = (0..n)
                    .map(|i| {
                        let mut rec = ParticipantRecord::new(format!("{tag}{i}"), r.random::<bool>());
                        rec.features = Some(vec![r.random(), r.random(), r.random()]);
                        rec
                    })
                    .collect();
                Cohort::new(records, Manifest::new("noise", None, n)).unwrap()
            };
            let train = make(200, "t");
            let test = make(3000, "h");
            let enc = FeatureEncoding::fit(&train, &[], true).unwrap();
            let cfg = ForestConfig { seed, n_trees: 30, ..Default::default() };
            let m = train_forest(&train, enc, &cfg).unwrap();
            let a = auc_of(predict_proba(&m, &test).unwrap(), &test);
            assert!((0.45..=0.55).contains(&a), "seed {seed}: {a}");
        }
    }

    #[test]
    fn leaf_fractions_normalised() {
        let c = symptom_cohort(300, 2, 0.0);
        let m = train_symptoms_model(&c, &ForestConfig::default()).unwrap();
        for t in &m.trees {
            for node in &t.nodes {
                if let Node::Leaf { fractions } = node {
                    assert!(fractions.iter().all(|f| (0.0..=1.0).contains(f)));
                    assert!((fractions[0] + fractions[1] - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(predict_proba(&m, &c).unwrap().iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn single_tree_and_identical_trees() {
        let c = flag_cohort(100, 3);
        let enc = FeatureEncoding::fit(&c, &["cough"], false).unwrap();
        let one = train_forest(&c, enc, &ForestConfig { n_trees: 1, ..Default::default() }).unwrap();
        let pos = c.iter().position(|r| r.label).unwrap();
        assert_eq!(predict_proba(&one, &c).unwrap()[pos], 1.0);
        let mut many = one.clone();
        many.trees = vec![one.trees[0].clone(); 7];
        assert_eq!(predict_proba(&many, &c).unwrap(), predict_proba(&one, &c).unwrap());
    }

    #[test]
    fn reordering_and_determinism() {
        let c = symptom_cohort(200, 4, 0.0);
        let m = train_symptoms_model(&c, &ForestConfig { seed: 9, ..Default::default() }).unwrap();
        assert_eq!(m, train_symptoms_model(&c, &ForestConfig { seed: 9, ..Default::default() }).unwrap());
        let p = predict_proba(&m, &c).unwrap();
        let rev: Vec<usize> = (0..c.len()).rev().collect();
        let q = predict_proba(&m, &c.select(&rev, "reversed")).unwrap();
        let q: Vec<f64> = q.into_iter().rev().collect();
        assert_eq!(p, q);
    }

    #[test]
    fn monotone_recoding_of_training_values() {
        let c = symptom_cohort(200, 5, 0.0);
        let recoded = c
            .map_records("age recoded", |r| {
                r.age_years = r.age_years * 3 + 7;
            })
            .unwrap();
        let enc = |c: &Cohort| FeatureEncoding::fit(c, &["cough", "age", "smoker"], false).unwrap();
        let cfg = ForestConfig { seed: 2, ..Default::default() };
        let a = train_forest(&c, enc(&c), &cfg).unwrap();
        let b = train_forest(&recoded, enc(&recoded), &cfg).unwrap();
        assert_eq!(predict_proba(&a, &c).unwrap(), predict_proba(&b, &recoded).unwrap());
    }

    #[test]
    fn unknown_level_encodes_to_zeros() {
        let c = symptom_cohort(50, 6, 0.0)
            .map_records("ethnicity", |r| {
                r.other_covariates.insert("ethnicity".into(), if r.label { "a".into() } else { "b".into() });
            })
            .unwrap();
        let enc = FeatureEncoding::symptoms(&c).unwrap();
        assert_eq!(enc.notes.len(), 1, "first_language should be dropped");
        let mut r = c.records()[0].clone();
        r.other_covariates.insert("ethnicity".into(), "zzz".into());
        let names = enc.feature_names();
        let x = enc.encode(&r).unwrap();
        for (n, v) in names.iter().zip(&x) {
            if n.starts_with("ethnicity=") {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let c = symptom_cohort(100, 7, 1.0);
        let m = train_symptoms_model(&c, &ForestConfig { n_trees: 5, ..Default::default() }).unwrap();
        let back = TreeEnsemble::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn hybrid_missing_score() {
        let mut c = symptom_cohort(10, 8, 0.0).into_records();
        c[3].score = None;
        let id = c[3].id.clone();
        let c = Cohort::new(c, Manifest::new("x", None, 10)).unwrap();
        assert_eq!(hybrid_features(&c).unwrap_err(), BaselineError::MissingScore(id));
    }

    #[test]
    fn oracle_audio_score_helps() {
        let train = symptom_cohort(300, 9, 0.0)
            .map_records("oracle", |r| {
                r.score = Some(if r.label { 1.0 } else { 0.0 });
            })
            .unwrap();
        let h = hybrid_features(&train).unwrap();
        let cfg = ForestConfig::default();
        let sym = train_symptoms_model(&train, &cfg).unwrap();
        let hyb = train_forest(&h, hybrid_encoding(&h).unwrap(), &cfg).unwrap();
        assert!(auc_of(predict_proba(&hyb, &h).unwrap(), &h) >= auc_of(predict_proba(&sym, &train).unwrap(), &train));
    }

    fn held_out_pair(seed: u64, signal: f64, constant: bool) -> (f64, f64) {
        let fix = |c: Cohort| {
            if constant {
                c.map_records("constant score", |r| {
                    r.score = Some(0.5);
                })
                .unwrap()
            } else {
                c
            }
        };
        let train = fix(symptom_cohort(400, seed, signal));
        let test = fix(symptom_cohort(1500, seed + 10_000, signal));
        let cfg = ForestConfig { seed, n_trees: 50, ..Default::default() };
        let sym = train_symptoms_model(&train, &cfg).unwrap();
        let (ht, hh) = (hybrid_features(&train).unwrap(), hybrid_features(&test).unwrap());
        let hyb = train_forest(&ht, hybrid_encoding(&ht).unwrap(), &cfg).unwrap();
        (
            auc_of(predict_proba(&sym, &test).unwrap(), &test),
            auc_of(predict_proba(&hyb, &hh).unwrap(), &hh),
        )
    }

    #[test]
    fn constant_audio_score_is_uninformative() {
        let mut diffs = Vec::new();
        for seed in 0..50 {
            let (s, h) = held_out_pair(seed, 0.0, true);
            diffs.push(h - s);
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn hybrid_not_materially_worse() {
        for seed in 0..50 {
            let (s, h) = held_out_pair(seed, 0.5, false);
            assert!(h >= s - 0.02, "seed {seed}: hybrid {h} vs symptoms {s}");
        }
    }
}
