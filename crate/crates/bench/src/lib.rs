//! Input generators shared by the benchmarks.

use confound_audit::data::{Cohort, Gender, Manifest, ParticipantRecord};
use confound_audit::metrics::ScoredLabels;
use confound_audit::rng;
use rand::Rng;

/// Scores with a mild positive shift and coarse rounding so ties occur.
pub fn scored(n: usize, seed: u64) -> ScoredLabels {
    let mut r = rng::seeded(seed);
    let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let scores = labels
        .iter()
        .map(|&l| ((r.random::<f64>() + if l { 0.3 } else { 0.0 }) * 1000.0).round() / 1000.0)
        .collect();
    ScoredLabels::new(scores, labels).expect("both classes present")
}

/// Cohort with random symptoms, demographics and `dim` feature values.
pub fn cohort(n: usize, dim: usize, seed: u64) -> Cohort {
    let mut r = rng::seeded(seed);
    let records = (0..n)
        .map(|i| {
            let y = r.random::<bool>();
            let mut rec = ParticipantRecord::new(format!("B{i:06}"), y);
            rec.symptoms.cough = r.random::<f64>() < if y { 0.6 } else { 0.3 };
            rec.symptoms.sore_throat = r.random::<f64>() < 0.3;
            rec.symptoms.runny_blocked_nose = r.random::<f64>() < 0.2;
            rec.age_years = r.random_range(18..80);
            rec.gender = if r.random::<bool>() { Gender::Male } else { Gender::Female };
            rec.score = Some((r.random::<f64>() + if y { 0.2 } else { 0.0 }) / 1.2);
            rec.features = Some((0..dim).map(|j| r.random::<f64>() + if y && j == 0 { 0.5 } else { 0.0 }).collect());
            rec
        })
        .collect();
    Cohort::new(records, Manifest::new("bench", Some(seed), n)).expect("valid records")
}
