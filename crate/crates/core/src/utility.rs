//! Expected utility of a testing protocol.
//!
//! A test applied to a population with prevalence π yields one of four
//! outcomes (predicted ŷ, true y) with probabilities fixed by π,
//! sensitivity and specificity. Weighting each outcome by its utility
//! `u[ŷ][y]` gives
//!
//! ```text
//! EU = π [(u11 − u01)·sens + u01] + (1 − π) [(u00 − u10)·spec + u10]
//! ```
//!
//! Utilities are measured in infections prevented. The illustrative family
//! used here sets `u11 = R_t − ε`, `u10 = −ε`, `u00 = 0` and `u01 = −δ`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{OperatingPoint, RocCurve};

#[derive(Debug, Error, PartialEq)]
pub enum UtilityError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("utility parameter {name} = {value} must be finite and non-negative")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("ROC curve has no operating points")]
    EmptyCurve,
}

/// Utility `u[ŷ][y]` of predicting ŷ for an individual with true status y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityMatrix {
    pub u11: f64,
    pub u10: f64,
    pub u00: f64,
    pub u01: f64,
}

impl UtilityMatrix {
    /// A correct call is worth less than the matching wrong call. Allowed,
    /// but EU then decreases in sensitivity or specificity.
    pub fn is_pathological(&self) -> bool {
        self.u11 < self.u01 || self.u00 < self.u10
    }

    pub fn shifted(&self, c: f64) -> UtilityMatrix {
        UtilityMatrix {
            u11: self.u11 + c,
            u10: self.u10 + c,
            u00: self.u00 + c,
            u01: self.u01 + c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    /// Infections prevented by isolating one true positive.
    pub r_t: f64,
    /// Cost of a (possibly needless) self-isolation.
    pub epsilon: f64,
    /// Extra infections caused by a false negative.
    pub delta: f64,
}

impl UtilityParams {
    pub fn new(r_t: f64, epsilon: f64, delta: f64) -> Result<Self, UtilityError> {
        for (name, value) in [("r_t", r_t), ("epsilon", epsilon), ("delta", delta)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(UtilityError::InvalidParam { name, value });
            }
        }
        Ok(UtilityParams { r_t, epsilon, delta })
    }
}

pub fn utility_matrix(params: &UtilityParams) -> UtilityMatrix {
    UtilityMatrix {
        u11: params.r_t - params.epsilon,
        u10: -params.epsilon,
        u00: 0.0,
        u01: 0.0 - params.delta,
    }
}

/// Joint probabilities `p[ŷ][y]` of the four test outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeProbs {
    pub p11: f64,
    pub p10: f64,
    pub p00: f64,
    pub p01: f64,
}

fn check_unit(name: &'static str, value: f64) -> Result<(), UtilityError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(UtilityError::OutOfRange { name, value })
    }
}

pub fn enumerate_outcome_probs(prevalence: f64, sens: f64, spec: f64) -> Result<OutcomeProbs, UtilityError> {
    check_unit("prevalence", prevalence)?;
    check_unit("sensitivity", sens)?;
    check_unit("specificity", spec)?;
    Ok(OutcomeProbs {
        p11: prevalence * sens,
        p01: prevalence * (1.0 - sens),
        p00: (1.0 - prevalence) * spec,
        p10: (1.0 - prevalence) * (1.0 - spec),
    })
}

/// Closed form of the expected utility.
pub fn expected_utility(u: &UtilityMatrix, prevalence: f64, sens: f64, spec: f64) -> Result<f64, UtilityError> {
    check_unit("prevalence", prevalence)?;
    check_unit("sensitivity", sens)?;
    check_unit("specificity", spec)?;
    Ok(prevalence * ((u.u11 - u.u01) * sens + u.u01) + (1.0 - prevalence) * ((u.u00 - u.u10) * spec + u.u10))
}

/// Expected utility as the outcome-weighted sum `Σ u[ŷ][y]·p[ŷ][y]`.
pub fn expected_utility_enumerated(u: &UtilityMatrix, p: &OutcomeProbs) -> f64 {
    u.u11 * p.p11 + u.u10 * p.p10 + u.u00 * p.p00 + u.u01 * p.p01
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxEuPoint {
    pub prevalence: f64,
    pub max_eu: f64,
    pub best: OperatingPoint,
}

/// Default prevalence grid: 101 points on [0, 0.1].
pub fn default_pi_grid() -> Vec<f64> {
    pi_grid(0.1, 101)
}

pub fn pi_grid(pi_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| pi_max * i as f64 / (n - 1) as f64).collect(),
    }
}

const TIE_TOL: f64 = 1e-12;

/// For each prevalence, the operating point of `roc` with the highest
/// expected utility. Ties within 1e-12 go to the higher specificity.
pub fn max_eu_curve(roc: &RocCurve, params: &UtilityParams, pi_grid: &[f64]) -> Result<Vec<MaxEuPoint>, UtilityError> {
    max_eu_curve_with(roc, &utility_matrix(params), pi_grid)
}

pub fn max_eu_curve_with(roc: &RocCurve, u: &UtilityMatrix, pi_grid: &[f64]) -> Result<Vec<MaxEuPoint>, UtilityError> {
    if roc.is_empty() {
        return Err(UtilityError::EmptyCurve);
    }
    pi_grid
        .iter()
        .map(|&pi| {
            let mut best: Option<(f64, OperatingPoint)> = None;
            for p in &roc.points {
                let eu = expected_utility(u, pi, p.sensitivity, p.specificity)?;
                best = match best {
                    None => Some((eu, *p)),
                    Some((b, bp)) => {
                        let tol = TIE_TOL * (1.0 + b.abs());
                        if eu > b + tol || ((eu - b).abs() <= tol && p.specificity > bp.specificity) {
                            Some((eu, *p))
                        } else {
                            Some((b, bp))
                        }
                    }
                };
            }
            let (max_eu, best) = best.expect("non-empty curve");
            Ok(MaxEuPoint {
                prevalence: pi,
                max_eu,
                best,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn op(sens: f64, spec: f64) -> OperatingPoint {
        OperatingPoint {
            threshold: 0.0,
            sensitivity: sens,
            specificity: spec,
        }
    }

    #[test]
    fn matrix_mapping() {
        let u = utility_matrix(&UtilityParams::new(1.5, 0.2, 0.0).unwrap());
        assert!((u.u11 - 1.3).abs() < 1e-15);
        assert_eq!((u.u10, u.u00, u.u01), (-0.2, 0.0, -0.0));
        let z = utility_matrix(&UtilityParams::new(0.0, 0.0, 0.0).unwrap());
        assert_eq!([z.u11, z.u10, z.u00, z.u01], [0.0; 4]);
        assert_eq!(utility_matrix(&UtilityParams::new(1.0, 0.02, 0.25).unwrap()).u01, -0.25);
        assert!(UtilityParams::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn expected_utility_fixtures() {
        let u = utility_matrix(&UtilityParams::new(1.5, 0.2, 0.0).unwrap());
        assert!((expected_utility(&u, 0.05, 1.0, 1.0).unwrap() - 0.065).abs() < 1e-15);
        assert_eq!(expected_utility(&u, 0.05, 0.0, 1.0).unwrap(), 0.0);
        let v = utility_matrix(&UtilityParams::new(1.0, 0.02, 0.0).unwrap());
        // π·R_t − ε with π = 0.02, R_t = 1, ε = 0.02.
        assert!(expected_utility(&v, 0.02, 1.0, 0.0).unwrap().abs() < 1e-15);
        assert!(matches!(expected_utility(&u, 1.5, 0.5, 0.5), Err(UtilityError::OutOfRange { .. })));
    }

    #[test]
    fn outcome_probs() {
        let p = enumerate_outcome_probs(0.5, 0.5, 0.5).unwrap();
        assert_eq!([p.p11, p.p10, p.p00, p.p01], [0.25; 4]);
        let p = enumerate_outcome_probs(0.0, 0.3, 0.9).unwrap();
        assert_eq!((p.p11, p.p01), (0.0, 0.0));
        let p = enumerate_outcome_probs(0.02, 0.65, 0.8).unwrap();
        assert!((p.p11 - 0.013).abs() < 1e-15);
        assert!((p.p01 - 0.007).abs() < 1e-15);
        assert!((p.p00 - 0.784).abs() < 1e-15);
        assert!((p.p10 - 0.196).abs() < 1e-15);
    }

    #[test]
    fn closed_form_equals_enumeration() {
        let mut r = rng::seeded(2024);
        for _ in 0..10_000 {
            let u = UtilityMatrix {
                u11: r.random_range(-3.0..3.0),
                u10: r.random_range(-3.0..3.0),
                u00: r.random_range(-3.0..3.0),
                u01: r.random_range(-3.0..3.0),
            };
            let (pi, se, sp) = (r.random::<f64>(), r.random::<f64>(), r.random::<f64>());
            let a = expected_utility(&u, pi, se, sp).unwrap();
            let b = expected_utility_enumerated(&u, &enumerate_outcome_probs(pi, se, sp).unwrap());
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_point_curve() {
        let roc = RocCurve::from_points(vec![op(0.7, 0.6)]);
        let params = UtilityParams::new(1.0, 0.2, 0.0).unwrap();
        for p in max_eu_curve(&roc, &params, &default_pi_grid()).unwrap() {
            assert_eq!((p.best.sensitivity, p.best.specificity), (0.7, 0.6));
        }
        assert_eq!(
            max_eu_curve(&RocCurve::from_points(vec![]), &params, &[0.1]),
            Err(UtilityError::EmptyCurve)
        );
    }

    #[test]
    fn zero_prevalence_picks_all_negative_corner() {
        let roc = RocCurve::from_points(vec![op(1.0, 0.0), op(0.8, 0.5), op(0.3, 0.9), op(0.0, 1.0)]);
        let params = UtilityParams::new(1.5, 0.2, 0.0).unwrap();
        let c = max_eu_curve(&roc, &params, &[0.0]).unwrap();
        assert_eq!((c[0].best.sensitivity, c[0].best.specificity), (0.0, 1.0));
        assert_eq!(c[0].max_eu, 0.0);
    }

    #[test]
    fn ties_prefer_specificity() {
        // With all-zero utilities every point ties.
        let roc = RocCurve::from_points(vec![op(1.0, 0.0), op(0.5, 0.7), op(0.2, 0.6)]);
        let c = max_eu_curve(&roc, &UtilityParams::new(0.0, 0.0, 0.0).unwrap(), &[0.05]).unwrap();
        assert_eq!(c[0].best.specificity, 0.7);
    }

    #[test]
    fn dominating_curve_has_higher_max_eu() {
        let b = RocCurve::from_points(vec![op(1.0, 0.0), op(0.7, 0.5), op(0.4, 0.8), op(0.0, 1.0)]);
        let a = RocCurve::from_points(vec![op(1.0, 0.0), op(0.8, 0.6), op(0.5, 0.85), op(0.0, 1.0)]);
        for params in [(1.0, 0.02, 0.0), (1.5, 0.2, 0.0), (1.0, 0.2, 0.25)] {
            let p = UtilityParams::new(params.0, params.1, params.2).unwrap();
            let ca = max_eu_curve(&a, &p, &pi_grid(1.0, 51)).unwrap();
            let cb = max_eu_curve(&b, &p, &pi_grid(1.0, 51)).unwrap();
            for (x, y) in ca.iter().zip(&cb) {
                assert!(x.max_eu >= y.max_eu - 1e-15);
            }
        }
    }

    #[test]
    fn grid_shape() {
        let g = default_pi_grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 0.0);
        assert!((g[100] - 0.1).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn monotone_in_sens_and_spec(pi in 0.0f64..1.0, s1 in 0.0f64..1.0, ds in 0.0f64..1.0, sp in 0.0f64..1.0,
                                     rt in 0.0f64..3.0, eps in 0.0f64..1.0, delta in 0.0f64..1.0) {
            let u = utility_matrix(&UtilityParams::new(rt, eps, delta).unwrap());
            let s2 = (s1 + ds).min(1.0);
            // Sensitivity only helps when a true positive beats a missed case.
            if u.u11 >= u.u01 {
                prop_assert!(expected_utility(&u, pi, s2, sp).unwrap() >= expected_utility(&u, pi, s1, sp).unwrap() - 1e-15);
            }
            prop_assert!(expected_utility(&u, pi, sp, s2).unwrap() >= expected_utility(&u, pi, sp, s1).unwrap() - 1e-15);
        }

        #[test]
        fn affine_shift_preserves_argmax(c in -5.0f64..5.0, rt in 0.0f64..3.0, eps in 0.0f64..1.0, seed in 0u64..500) {
            let mut r = rng::seeded(seed);
            let mut pts: Vec<OperatingPoint> = (0..6).map(|_| op(r.random(), r.random())).collect();
            pts.push(op(1.0, 0.0));
            pts.push(op(0.0, 1.0));
            let roc = RocCurve::from_points(pts);
            let u = utility_matrix(&UtilityParams::new(rt, eps, 0.1).unwrap());
            let grid = pi_grid(0.1, 11);
            let a = max_eu_curve_with(&roc, &u, &grid).unwrap();
            let b = max_eu_curve_with(&roc, &u.shifted(c), &grid).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((y.max_eu - x.max_eu - c).abs() < 1e-9);
                prop_assert_eq!(x.best, y.best);
            }
        }
    }
}
