use serde::{Deserialize, Serialize};

use super::{MetricsError, ScoredLabels};

/// Predicted positive iff `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Operating points ordered by increasing threshold. The first point is
/// (sensitivity 1, specificity 0); the last, at an infinite threshold, is
/// (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<OperatingPoint>,
}

impl RocCurve {
    pub fn from_points(points: Vec<OperatingPoint>) -> Self {
        RocCurve { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Trapezoidal area in (1 - specificity, sensitivity) space.
    pub fn area(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = self
            .points
            .iter()
            .map(|p| (1.0 - p.specificity, p.sensitivity))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        pts.windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }
}

/// Indices sorted by score ascending, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in idx {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

pub fn roc_curve(d: &ScoredLabels) -> Result<RocCurve, MetricsError> {
    d.require_both()?;
    let n_pos = d.n_pos() as f64;
    let n_neg = d.n_neg() as f64;

    // Sweep thresholds upward; counts below the current threshold are
    // predicted negative.
    let mut pos_below = 0usize;
    let mut neg_below = 0usize;
    let mut points = Vec::new();
    for g in tie_groups(d.scores()) {
        points.push(OperatingPoint {
            threshold: d.scores()[g[0]],
            sensitivity: (n_pos - pos_below as f64) / n_pos,
            specificity: neg_below as f64 / n_neg,
        });
        for &i in &g {
            if d.labels()[i] {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
        }
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        sensitivity: 0.0,
        specificity: 1.0,
    });
    Ok(RocCurve { points })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed exactly in integer arithmetic over tie
/// groups.
pub fn auc(d: &ScoredLabels) -> Result<f64, MetricsError> {
    d.require_both()?;
    let mut neg_below: u128 = 0;
    let mut twice_wins: u128 = 0;
    for g in tie_groups(d.scores()) {
        let p = g.iter().filter(|&&i| d.labels()[i]).count() as u128;
        let q = g.len() as u128 - p;
        twice_wins += 2 * p * neg_below + p * q;
        neg_below += q;
    }
    let pairs = 2 * d.n_pos() as u128 * d.n_neg() as u128;
    Ok(twice_wins as f64 / pairs as f64)
}

/// Average precision: sum over distinct thresholds (descending) of the
/// recall increment times the precision at that threshold.
pub fn pr_auc(d: &ScoredLabels) -> Result<f64, MetricsError> {
    d.require_both()?;
    let n_pos = d.n_pos() as f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for g in tie_groups(d.scores()).into_iter().rev() {
        for &i in &g {
            if d.labels()[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / n_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Unweighted average recall (balanced accuracy).
pub fn uar(predictions: &[bool], labels: &[bool]) -> Result<f64, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: predictions.len(),
            labels: labels.len(),
        });
    }
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in predictions.iter().zip(labels) {
        if l {
            pos += 1;
            tp += usize::from(p);
        } else {
            neg += 1;
            tn += usize::from(!p);
        }
    }
    if pos == 0 || neg == 0 {
        return Err(MetricsError::OneClassOnly);
    }
    Ok((tp as f64 / pos as f64 + tn as f64 / neg as f64) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sl(scores: &[f64], labels: &[u8]) -> ScoredLabels {
        ScoredLabels::new(scores.to_vec(), labels.iter().map(|&l| l == 1).collect()).unwrap()
    }

    /// Pairwise definition, independent of the tie-group sweep.
    fn brute_auc(d: &ScoredLabels) -> f64 {
        let (pos, neg) = d.split();
        let mut s = 0.0;
        for &p in &pos {
            for &n in &neg {
                s += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        s / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn perfect_classifier_hits_corner() {
        let r = roc_curve(&sl(&[1.0, 1.0, 0.0, 0.0], &[1, 1, 0, 0])).unwrap();
        assert!(r.points.iter().any(|p| p.sensitivity == 1.0 && p.specificity == 1.0));
    }

    #[test]
    fn constant_scores_give_two_corner_points() {
        let r = roc_curve(&sl(&[0.3; 4], &[1, 0, 1, 0])).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!((r.points[0].sensitivity, r.points[0].specificity), (1.0, 0.0));
        assert_eq!((r.points[1].sensitivity, r.points[1].specificity), (0.0, 1.0));
        assert_eq!(auc(&sl(&[0.3; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
    }

    #[test]
    fn small_fixture_area() {
        let d = sl(&[0.1, 0.4, 0.35, 0.8], &[0, 0, 1, 1]);
        assert_eq!(brute_auc(&d), 0.75);
        assert_eq!(auc(&d).unwrap(), 0.75);
        assert!((roc_curve(&d).unwrap().area() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn perfect_separation_auc_one() {
        assert_eq!(auc(&sl(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0])).unwrap(), 1.0);
    }

    #[test]
    fn one_class_rejected() {
        let d = sl(&[0.1, 0.2], &[1, 1]);
        assert_eq!(auc(&d), Err(MetricsError::OneClassOnly));
        assert_eq!(roc_curve(&d), Err(MetricsError::OneClassOnly));
        assert_eq!(pr_auc(&d), Err(MetricsError::OneClassOnly));
    }

    #[test]
    fn average_precision_fixtures() {
        assert_eq!(pr_auc(&sl(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0])).unwrap(), 1.0);
        assert!((pr_auc(&sl(&[0.5; 5], &[1, 0, 0, 1, 0])).unwrap() - 0.4).abs() < 1e-15);
        // Precision 1 at recall 1/2, then 2/3 at recall 1.
        let ap = pr_auc(&sl(&[0.9, 0.8, 0.1], &[1, 0, 1])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn uar_fixtures() {
        // 3/5 positives and 4/5 negatives correct.
        let labels = [true, true, true, true, true, false, false, false, false, false];
        let preds = [true, true, true, false, false, false, false, false, false, true];
        assert!((uar(&preds, &labels).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(uar(&[true; 10], &labels).unwrap(), 0.5);
        assert_eq!(uar(&[true, false], &[true, true]), Err(MetricsError::OneClassOnly));
    }

    fn instance() -> impl Strategy<Value = ScoredLabels> {
        (2usize..120)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..12, n),
                    proptest::collection::vec(any::<bool>(), n),
                )
            })
            .prop_filter("both classes", |(_, l)| l.iter().any(|&x| x) && l.iter().any(|&x| !x))
            .prop_map(|(s, l)| ScoredLabels::new(s.into_iter().map(|v| v as f64 / 11.0).collect(), l).unwrap())
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_and_trapezoid(d in instance()) {
            let a = auc(&d).unwrap();
            prop_assert!((a - brute_auc(&d)).abs() <= 1e-12);
            prop_assert!((a - roc_curve(&d).unwrap().area()).abs() <= 1e-12);
        }

        #[test]
        fn auc_label_symmetry(d in instance()) {
            let a = auc(&d).unwrap();
            let b = auc(&d.flipped()).unwrap();
            prop_assert!((a + b - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(d in instance()) {
            let t = ScoredLabels::new(
                d.scores().iter().map(|s| (3.0 * s).exp() - 7.0).collect(),
                d.labels().to_vec(),
            ).unwrap();
            prop_assert_eq!(auc(&d).unwrap(), auc(&t).unwrap());
        }

        #[test]
        fn roc_monotone(d in instance()) {
            let r = roc_curve(&d).unwrap();
            for w in r.points.windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[0].sensitivity >= w[1].sensitivity);
                prop_assert!(w[0].specificity <= w[1].specificity);
            }
            prop_assert_eq!((r.points[0].sensitivity, r.points[0].specificity), (1.0, 0.0));
        }
    }
}
