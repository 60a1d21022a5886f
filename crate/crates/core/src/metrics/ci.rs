//! Normal-approximation AUC intervals (Hanley-McNeil and DeLong) and the
//! paired DeLong test.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::{auc, MetricsError, ScoredLabels};

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    HanleyMcneil,
    Delong,
}

impl std::str::FromStr for CiMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hanley_mcneil" | "hanley-mcneil" | "hm" => Ok(CiMethod::HanleyMcneil),
            "delong" => Ok(CiMethod::Delong),
            other => Err(format!("unknown CI method `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HanleyMcNeilDetail {
    pub q1: f64,
    pub q2: f64,
    pub se: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    pub se: f64,
    /// True when an endpoint was clipped to [0, 1].
    pub clipped: bool,
    pub detail: Option<HanleyMcNeilDetail>,
}

impl ConfidenceInterval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Per-sample structural components of the Mann-Whitney AUC.
#[derive(Debug, Clone, PartialEq)]
pub struct DelongComponents {
    pub auc: f64,
    /// One entry per positive: fraction of negatives it beats (ties half).
    pub v10: Vec<f64>,
    /// One entry per negative: fraction of positives beating it.
    pub v01: Vec<f64>,
}

/// Counts of values in sorted `xs` strictly below and equal to `x`.
fn below_equal(xs: &[f64], x: f64) -> (usize, usize) {
    let lo = xs.partition_point(|&v| v < x);
    let hi = xs.partition_point(|&v| v <= x);
    (lo, hi - lo)
}

pub fn delong_components(d: &ScoredLabels) -> Result<DelongComponents, MetricsError> {
    d.require_both()?;
    let (mut pos, mut neg) = d.split();
    let m = pos.len() as f64;
    let n = neg.len() as f64;
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);

    // Keep positives/negatives in original order for pairing across classifiers.
    let mut v10 = Vec::with_capacity(pos.len());
    let mut v01 = Vec::with_capacity(neg.len());
    for (&s, &l) in d.scores().iter().zip(d.labels()) {
        if l {
            let (b, e) = below_equal(&neg, s);
            v10.push((b as f64 + 0.5 * e as f64) / n);
        } else {
            let (b, e) = below_equal(&pos, s);
            // positives strictly above s, plus half the ties
            let above = pos.len() - b - e;
            v01.push((above as f64 + 0.5 * e as f64) / m);
        }
    }
    Ok(DelongComponents {
        auc: auc(d)?,
        v10,
        v01,
    })
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let k = a.len() as f64;
    let ma = a.iter().sum::<f64>() / k;
    let mb = b.iter().sum::<f64>() / k;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (k - 1.0)
}

impl DelongComponents {
    pub fn variance(&self) -> f64 {
        covariance(&self.v10, &self.v10) / self.v10.len() as f64
            + covariance(&self.v01, &self.v01) / self.v01.len() as f64
    }
}

fn interval(estimate: f64, se: f64, level: f64, method: CiMethod, detail: Option<HanleyMcNeilDetail>) -> ConfidenceInterval {
    let z = normal_quantile(0.5 + level / 2.0);
    let lo = estimate - z * se;
    let hi = estimate + z * se;
    ConfidenceInterval {
        estimate,
        lower: lo.max(0.0),
        upper: hi.min(1.0),
        level,
        method,
        se,
        clipped: lo < 0.0 || hi > 1.0,
        detail,
    }
}

/// Hanley-McNeil standard error of an AUC `a` from class sizes.
pub fn hanley_mcneil(a: f64, n_pos: usize, n_neg: usize) -> HanleyMcNeilDetail {
    let q1 = a / (2.0 - a);
    let q2 = 2.0 * a * a / (1.0 + a);
    let np = n_pos as f64;
    let nn = n_neg as f64;
    let var = (a * (1.0 - a) + (np - 1.0) * (q1 - a * a) + (nn - 1.0) * (q2 - a * a)) / (np * nn);
    HanleyMcNeilDetail {
        q1,
        q2,
        se: var.max(0.0).sqrt(),
        n_pos,
        n_neg,
    }
}

/// `estimate ± z·SE`, clipped to [0, 1].
pub fn auc_ci(d: &ScoredLabels, method: CiMethod, level: f64) -> Result<ConfidenceInterval, MetricsError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricsError::BadLevel(level));
    }
    d.require_both()?;
    match method {
        CiMethod::HanleyMcneil => {
            let a = auc(d)?;
            let detail = hanley_mcneil(a, d.n_pos(), d.n_neg());
            Ok(interval(a, detail.se, level, method, Some(detail)))
        }
        CiMethod::Delong => {
            let (n_pos, n_neg) = (d.n_pos(), d.n_neg());
            if n_pos < 2 || n_neg < 2 {
                return Err(MetricsError::TooFewSamples { n_pos, n_neg });
            }
            let c = delong_components(d)?;
            Ok(interval(c.auc, c.variance().sqrt(), level, method, None))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelongTest {
    pub auc_a: f64,
    pub auc_b: f64,
    pub z: f64,
    /// Two-sided.
    pub p: f64,
}

/// Paired DeLong test of equal AUC for two classifiers scored on the same
/// samples.
pub fn delong_test(a: &ScoredLabels, b: &ScoredLabels) -> Result<DelongTest, MetricsError> {
    if a.labels() != b.labels() {
        return Err(MetricsError::LabelMismatch);
    }
    let (n_pos, n_neg) = (a.n_pos(), a.n_neg());
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::OneClassOnly);
    }
    if n_pos < 2 || n_neg < 2 {
        return Err(MetricsError::TooFewSamples { n_pos, n_neg });
    }
    let ca = delong_components(a)?;
    let cb = delong_components(b)?;
    let var = (covariance(&ca.v10, &ca.v10) + covariance(&cb.v10, &cb.v10) - 2.0 * covariance(&ca.v10, &cb.v10))
        / n_pos as f64
        + (covariance(&ca.v01, &ca.v01) + covariance(&cb.v01, &cb.v01) - 2.0 * covariance(&ca.v01, &cb.v01))
            / n_neg as f64;
    let diff = ca.auc - cb.auc;
    let (z, p) = if var <= 0.0 || !var.is_finite() {
        if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let z = diff / var.sqrt();
        (z, (2.0 * (1.0 - normal_cdf(z.abs()))).min(1.0))
    };
    Ok(DelongTest {
        auc_a: ca.auc,
        auc_b: cb.auc,
        z,
        p,
    })
}
