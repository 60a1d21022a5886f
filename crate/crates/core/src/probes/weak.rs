use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::ProbeError;
use crate::rng;

/// Fixed regularisation constant of the weak model.
pub const SVM_C: f64 = 1.0;
const MAX_EPOCHS: usize = 1000;
const TOL: f64 = 1e-3;

/// Linear max-margin classifier on standardised inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakModel {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl WeakModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .zip(&self.weights)
                .map(|(((x, m), s), w)| w * (x - m) / s)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) > 0.0
    }
}

/// Hinge-loss SVM, `0.5|w|² + C Σ max(0, 1 - y(w·x + b))`, solved by dual
/// coordinate descent with the bias as an extra unit feature. Updates visit
/// samples in a seeded order, so the fit is deterministic given `seed`.
pub fn train_weak_linear<R: AsRef<[f64]>>(x: &[R], y: &[bool], seed: u64) -> Result<WeakModel, ProbeError> {
    let n = x.len();
    if y.len() != n || n == 0 {
        return Err(ProbeError::TooFewRecords { needed: 2, have: n.min(y.len()) });
    }
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(ProbeError::OneClassOnly);
    }
    let d = x[0].as_ref().len();
    let mut mean = vec![0.0; d];
    for r in x {
        let r = r.as_ref();
        if r.len() != d {
            return Err(ProbeError::Ragged);
        }
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for r in x {
        scale.iter_mut().zip(r.as_ref()).zip(&mean).for_each(|((s, v), m)| *s += (v - m) * (v - m));
    }
    scale.iter_mut().for_each(|s| {
        let sd = (*s / n as f64).sqrt();
        *s = if sd > 0.0 { sd } else { 1.0 };
    });

    // Standardised rows with a trailing bias coordinate.
    let z: Vec<Vec<f64>> = x
        .iter()
        .map(|r| {
            let mut v: Vec<f64> = r.as_ref().iter().zip(&mean).zip(&scale).map(|((v, m), s)| (v - m) / s).collect();
            v.push(1.0);
            v
        })
        .collect();
    let sign: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
    let q: Vec<f64> = z.iter().map(|v| v.iter().map(|a| a * a).sum()).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::seeded(rng::derive(seed, "weak-svm"));

    for _ in 0..MAX_EPOCHS {
        order.shuffle(&mut r);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = sign[i] * w.iter().zip(&z[i]).map(|(a, b)| a * b).sum::<f64>() - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == SVM_C {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, SVM_C);
                let step = (alpha[i] - old) * sign[i];
                w.iter_mut().zip(&z[i]).for_each(|(wj, zj)| *wj += step * zj);
            }
        }
        if pg_max - pg_min < TOL {
            break;
        }
    }
    let bias = w.pop().unwrap_or(0.0);
    Ok(WeakModel {
        mean,
        scale,
        weights: w,
        bias,
    })
}
