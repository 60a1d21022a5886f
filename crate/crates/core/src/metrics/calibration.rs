use serde::{Deserialize, Serialize};

use super::MetricsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub mean_score: f64,
    pub frac_positive: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    /// Non-empty bins in increasing score order.
    pub bins: Vec<CalibrationBin>,
    /// Expected calibration error: count-weighted mean |mean_score - frac_positive|.
    pub ece: f64,
    pub n: usize,
}

/// Equal-width reliability bins on [0, 1]. A score of exactly 1 falls in
/// the last bin; scores outside [0, 1] are clamped.
pub fn calibration_bins(scores: &[f64], labels: &[bool], n_bins: usize) -> Result<CalibrationSummary, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() || n_bins == 0 {
        return Err(MetricsError::Empty);
    }
    let mut sum = vec![0.0; n_bins];
    let mut pos = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for (i, (&s, &l)) in scores.iter().zip(labels).enumerate() {
        if !s.is_finite() {
            return Err(MetricsError::NonFinite(i));
        }
        let s = s.clamp(0.0, 1.0);
        let b = ((s * n_bins as f64).floor() as usize).min(n_bins - 1);
        sum[b] += s;
        pos[b] += usize::from(l);
        count[b] += 1;
    }
    let n = scores.len();
    let mut bins = Vec::new();
    let mut ece = 0.0;
    for b in 0..n_bins {
        if count[b] == 0 {
            continue;
        }
        let k = count[b] as f64;
        let bin = CalibrationBin {
            lower: b as f64 / n_bins as f64,
            upper: (b + 1) as f64 / n_bins as f64,
            mean_score: sum[b] / k,
            frac_positive: pos[b] as f64 / k,
            count: count[b],
        };
        ece += k / n as f64 * (bin.mean_score - bin.frac_positive).abs();
        bins.push(bin);
    }
    Ok(CalibrationSummary { bins, ece, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn perfectly_calibrated() {
        // Bin [0.2, 0.3): score 0.25, one of four positive.
        // Bin [0.7, 0.8): score 0.75, three of four positive.
        let scores = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let labels = [true, false, false, false, true, true, true, false];
        let c = calibration_bins(&scores, &labels, 10).unwrap();
        assert_eq!(c.bins.len(), 2);
        assert_eq!(c.ece, 0.0);
        assert!(c.bins.iter().all(|b| b.mean_score == b.frac_positive));
    }

    #[test]
    fn confident_and_wrong() {
        let c = calibration_bins(&[1.0; 5], &[false; 5], 10).unwrap();
        assert_eq!(c.bins.len(), 1);
        assert_eq!(c.bins[0].count, 5);
        assert_eq!(c.ece, 1.0);
    }

    #[test]
    fn ece_matches_direct_recomputation() {
        let mut r = rng::seeded(5);
        let n = 2000;
        let mut scores = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = r.random_range(-4.0..4.0);
            let p = 1.0 / (1.0 + (-z).exp());
            scores.push(p);
            labels.push(r.random::<f64>() < p.powf(1.3));
        }
        let c = calibration_bins(&scores, &labels, 10).unwrap();

        // Oracle: per-score bin membership by interval tests, then the ECE sum.
        let mut oracle = 0.0;
        for b in 0..10 {
            let lo = b as f64 / 10.0;
            let hi = (b + 1) as f64 / 10.0;
            let members: Vec<usize> = (0..n)
                .filter(|&i| scores[i] * 10.0 >= b as f64 && (scores[i] * 10.0 < (b + 1) as f64 || b == 9))
                .collect();
            if members.is_empty() {
                continue;
            }
            let _ = (lo, hi);
            let k = members.len() as f64;
            let ms = members.iter().map(|&i| scores[i]).sum::<f64>() / k;
            let fp = members.iter().filter(|&&i| labels[i]).count() as f64 / k;
            oracle += k / n as f64 * (ms - fp).abs();
        }
        assert!((c.ece - oracle).abs() < 1e-12);
        assert_eq!(c.bins.iter().map(|b| b.count).sum::<usize>(), n);
    }
}
