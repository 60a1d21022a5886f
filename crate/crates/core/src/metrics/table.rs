//! Statistics of a 2x2 table relating a binary predictor (e.g. "any
//! symptom") to the binary label.

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Joint counts or probabilities. Rows: predictor present/absent; columns:
/// label positive/negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table2x2 {
    pub x1_pos: f64,
    pub x1_neg: f64,
    pub x0_pos: f64,
    pub x0_neg: f64,
}

impl Table2x2 {
    /// Joint distribution implied by a prevalence and the per-class
    /// probabilities of the predictor.
    pub fn from_population(prevalence: f64, p_x_given_pos: f64, p_x_given_neg: f64) -> Self {
        Table2x2 {
            x1_pos: prevalence * p_x_given_pos,
            x1_neg: (1.0 - prevalence) * p_x_given_neg,
            x0_pos: prevalence * (1.0 - p_x_given_pos),
            x0_neg: (1.0 - prevalence) * (1.0 - p_x_given_neg),
        }
    }

    /// Tabulates aligned predictor/label pairs.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut t = Table2x2 {
            x1_pos: 0.0,
            x1_neg: 0.0,
            x0_pos: 0.0,
            x0_neg: 0.0,
        };
        for (x, y) in pairs {
            *match (x, y) {
                (true, true) => &mut t.x1_pos,
                (true, false) => &mut t.x1_neg,
                (false, true) => &mut t.x0_pos,
                (false, false) => &mut t.x0_neg,
            } += 1.0;
        }
        t
    }

    /// Swaps predictor and label roles.
    pub fn transposed(&self) -> Self {
        Table2x2 {
            x1_pos: self.x1_pos,
            x1_neg: self.x0_pos,
            x0_pos: self.x1_neg,
            x0_neg: self.x0_neg,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableStats {
    /// Phi coefficient.
    pub phi: f64,
    /// Mutual information, nats.
    pub mi: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auc: f64,
}

impl TableStats {
    pub fn mi_bits(&self) -> f64 {
        self.mi / std::f64::consts::LN_2
    }
}

pub fn table_2x2_stats(t: &Table2x2) -> Result<TableStats, MetricsError> {
    let cells = [t.x1_pos, t.x1_neg, t.x0_pos, t.x0_neg];
    if cells.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(MetricsError::InvalidTable);
    }
    let total: f64 = cells.iter().sum();
    if total <= 0.0 {
        return Err(MetricsError::InvalidTable);
    }
    let [a, b, c, d] = cells.map(|v| v / total);
    let x1 = a + b;
    let x0 = c + d;
    let pos = a + c;
    let neg = b + d;
    if x1 == 0.0 || x0 == 0.0 || pos == 0.0 || neg == 0.0 {
        return Err(MetricsError::DegenerateTable);
    }

    let phi = (a * d - b * c) / (x1 * x0 * pos * neg).sqrt();
    let term = |p: f64, px: f64, py: f64| if p > 0.0 { p * (p / (px * py)).ln() } else { 0.0 };
    let mi = term(a, x1, pos) + term(b, x1, neg) + term(c, x0, pos) + term(d, x0, neg);

    let sensitivity = t.x1_pos / (t.x1_pos + t.x0_pos);
    let specificity = t.x0_neg / (t.x1_neg + t.x0_neg);
    Ok(TableStats {
        phi,
        mi: mi.max(0.0),
        sensitivity,
        specificity,
        auc: (sensitivity + specificity) / 2.0,
    })
}

/// Phi coefficient from integer counts, exact zero when the cross-product
/// difference vanishes. `None` on a zero marginal.
pub fn phi_from_counts(n11: u64, n10: u64, n01: u64, n00: u64) -> Option<f64> {
    let num = i128::from(n11) * i128::from(n00) - i128::from(n10) * i128::from(n01);
    let r1 = (n11 + n10) as f64;
    let r0 = (n01 + n00) as f64;
    let c1 = (n11 + n01) as f64;
    let c0 = (n10 + n00) as f64;
    if r1 == 0.0 || r0 == 0.0 || c1 == 0.0 || c0 == 0.0 {
        return None;
    }
    if num == 0 {
        return Some(0.0);
    }
    Some(num as f64 / (r1 * r0 * c1 * c0).sqrt())
}
