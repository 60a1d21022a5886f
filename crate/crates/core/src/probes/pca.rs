use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitScope {
    NegOnly,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, by decreasing explained variance.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
    pub fitted_on: FitScope,
    /// Set when fewer components than requested had nonzero variance.
    pub warning: Option<String>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Coordinates of `x` on the first `k` components.
    pub fn transform(&self, x: &[f64], k: usize) -> Vec<f64> {
        self.components[..k.min(self.components.len())]
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((ci, xi), m)| ci * (xi - m)).sum())
            .collect()
    }

    pub fn inverse_transform(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (zi, c) in z.iter().zip(&self.components) {
            for (xj, cj) in x.iter_mut().zip(c) {
                *xj += zi * cj;
            }
        }
        x
    }
}

/// Centered PCA by eigendecomposition of the sample covariance (divisor
/// n - 1). Each component's largest-magnitude coordinate is made positive,
/// the first such coordinate on ties.
pub fn pca_fit<R: AsRef<[f64]>>(rows: &[R], n_components: usize, fitted_on: FitScope) -> Result<PcaModel, ProbeError> {
    let n = rows.len();
    if n < n_components + 1 || n < 2 {
        return Err(ProbeError::TooFewRecords {
            needed: (n_components + 1).max(2),
            have: n,
        });
    }
    let d = rows[0].as_ref().len();
    for (i, r) in rows.iter().enumerate() {
        let r = r.as_ref();
        if r.len() != d {
            return Err(ProbeError::Ragged);
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(ProbeError::NonFinite(i));
        }
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| rows[i].as_ref()[j] - mean[j]);
    let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * 1e-12 * d as f64;
    let nonzero = order.iter().filter(|&&i| eig.eigenvalues[i] > tol).count();
    let want = n_components.min(d);
    let keep = want.min(nonzero);
    let warning = (keep < n_components).then(|| {
        format!("requested {n_components} components but only {keep} have nonzero variance; truncated")
    });

    let mut components = Vec::with_capacity(keep);
    let mut explained_variance = Vec::with_capacity(keep);
    for &i in &order[..keep] {
        let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let mut lead = 0;
        for j in 1..d {
            if v[j].abs() > v[lead].abs() {
                lead = j;
            }
        }
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[i]);
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        fitted_on,
        warning,
    })
}
