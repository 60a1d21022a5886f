//! Posterior predictive entropy and its decomposition into expected
//! entropy (aleatoric) and mutual information (epistemic).

use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    /// Entropy of the draw-averaged class distribution, nats.
    pub predictive_entropy: f64,
    /// Mean entropy of the individual draws, nats.
    pub expected_entropy: f64,
    /// `predictive_entropy - expected_entropy`.
    pub mutual_information: f64,
    pub n_samples: usize,
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// `sample_probs` holds one class-probability vector per posterior draw.
pub fn uncertainty_decompose(sample_probs: &[Vec<f64>]) -> Result<UncertaintySummary, MetricsError> {
    let s = sample_probs.len();
    if s == 0 {
        return Err(MetricsError::Empty);
    }
    let c = sample_probs[0].len();
    for (i, row) in sample_probs.iter().enumerate() {
        let ok = row.len() == c
            && c > 0
            && row.iter().all(|&p| p.is_finite() && p >= 0.0)
            && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        if !ok {
            return Err(MetricsError::NotAProbabilityRow(i));
        }
    }
    let mut mean = vec![0.0; c];
    for row in sample_probs {
        for (m, p) in mean.iter_mut().zip(row) {
            *m += p;
        }
    }
    mean.iter_mut().for_each(|m| *m /= s as f64);

    let predictive_entropy = entropy(&mean);
    let expected_entropy = sample_probs.iter().map(|r| entropy(r)).sum::<f64>() / s as f64;
    Ok(UncertaintySummary {
        predictive_entropy,
        expected_entropy,
        mutual_information: predictive_entropy - expected_entropy,
        n_samples: s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    #[test]
    fn agreement_has_no_uncertainty() {
        let u = uncertainty_decompose(&vec![vec![1.0, 0.0]; 5]).unwrap();
        assert_eq!((u.predictive_entropy, u.expected_entropy, u.mutual_information), (0.0, 0.0, 0.0));
    }

    #[test]
    fn disagreement_is_epistemic() {
        let u = uncertainty_decompose(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(u.predictive_entropy, LN_2);
        assert_eq!(u.expected_entropy, 0.0);
        assert_eq!(u.mutual_information, LN_2);
    }

    #[test]
    fn coin_flips_are_aleatoric() {
        let u = uncertainty_decompose(&vec![vec![0.5, 0.5]; 4]).unwrap();
        assert_eq!(u.predictive_entropy, LN_2);
        assert_eq!(u.expected_entropy, LN_2);
        assert_eq!(u.mutual_information, 0.0);
    }

    #[test]
    fn rejects_bad_rows() {
        assert_eq!(
            uncertainty_decompose(&[vec![0.5, 0.5], vec![0.7, 0.7]]),
            Err(MetricsError::NotAProbabilityRow(1))
        );
        assert_eq!(uncertainty_decompose(&[]), Err(MetricsError::Empty));
    }

    proptest! {
        #[test]
        fn decomposition_bounds(raw in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 3), 1..20)) {
            let rows: Vec<Vec<f64>> = raw
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum::<f64>() + 1e-3;
                    let mut v: Vec<f64> = r.iter().map(|x| (x + 1e-3 / 3.0) / s).collect();
                    let t: f64 = v.iter().sum();
                    v.iter_mut().for_each(|x| *x /= t);
                    v
                })
                .collect();
            let u = uncertainty_decompose(&rows).unwrap();
            prop_assert!(u.mutual_information >= -1e-12);
            prop_assert!(u.expected_entropy >= 0.0);
            prop_assert!(u.predictive_entropy <= 3f64.ln() + 1e-12);
        }
    }
}
