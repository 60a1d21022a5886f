use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BaselineError, FeatureEncoding};
use crate::data::Cohort;
use crate::metrics::{auc, ScoredLabels};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌊√p⌋ (at least 1).
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Weighted class fractions `[negative, positive]`.
    Leaf { fractions: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { fractions } => return fractions[1],
            }
        }
    }
}

/// Bagged CART classification trees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub encoding: FeatureEncoding,
    pub max_features: usize,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<Tree>,
    /// Out-of-bag accuracy at threshold 0.5 over records left out by at
    /// least one tree.
    pub oob_score: Option<f64>,
    pub oob_auc: Option<f64>,
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    mtry: usize,
}

impl Grower<'_> {
    /// Grows to purity; `samples` holds (index, bootstrap weight).
    fn grow<R: Rng>(&self, samples: Vec<(usize, f64)>, r: &mut R) -> Tree {
        let mut nodes = vec![Node::Leaf { fractions: [0.0, 0.0] }];
        let mut stack = vec![(0usize, samples)];
        let p = self.x[0].len();
        let mut features: Vec<usize> = (0..p).collect();
        while let Some((at, s)) = stack.pop() {
            let w: f64 = s.iter().map(|&(_, w)| w).sum();
            let wp: f64 = s.iter().filter(|&&(i, _)| self.y[i]).map(|&(_, w)| w).sum();
            let leaf = Node::Leaf {
                fractions: [(w - wp) / w, wp / w],
            };
            if wp == 0.0 || wp == w || s.len() < 2 {
                nodes[at] = leaf;
                continue;
            }
            features.shuffle(r);
            let mut best: Option<(f64, usize, f64)> = None;
            let mut visited = 0;
            for &f in &features {
                if visited == self.mtry {
                    break;
                }
                if let Some((imp, thr)) = self.best_threshold(&s, f, w, wp) {
                    visited += 1;
                    if best.map_or(true, |(b, _, _)| imp < b) {
                        best = Some((imp, f, thr));
                    }
                }
            }
            let Some((_, feature, threshold)) = best else {
                nodes[at] = leaf;
                continue;
            };
            let (ls, rs): (Vec<_>, Vec<_>) = s.into_iter().partition(|&(i, _)| self.x[i][feature] <= threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { fractions: [0.0, 0.0] });
            nodes.push(Node::Leaf { fractions: [0.0, 0.0] });
            nodes[at] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, rs));
            stack.push((left, ls));
        }
        Tree { nodes }
    }

    /// Lowest weighted Gini impurity over thresholds of feature `f`;
    /// `None` when `f` is constant on the node.
    fn best_threshold(&self, s: &[(usize, f64)], f: usize, w: f64, wp: f64) -> Option<(f64, f64)> {
        let mut v: Vec<(f64, f64, bool)> = s.iter().map(|&(i, wt)| (self.x[i][f], wt, self.y[i])).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        if v[0].0 == v[v.len() - 1].0 {
            return None;
        }
        let gini = |n: f64, pos: f64| if n > 0.0 { 2.0 * pos * (n - pos) / n } else { 0.0 };
        let (mut lw, mut lp) = (0.0, 0.0);
        let mut best: Option<(f64, f64)> = None;
        for k in 0..v.len() - 1 {
            lw += v[k].1;
            if v[k].2 {
                lp += v[k].1;
            }
            if v[k].0 == v[k + 1].0 {
                continue;
            }
            let imp = gini(lw, lp) + gini(w - lw, wp - lp);
            if best.map_or(true, |(b, _)| imp < b) {
                let mid = v[k].0 + (v[k + 1].0 - v[k].0) / 2.0;
                let thr = if mid < v[k + 1].0 { mid } else { v[k].0 };
                best = Some((imp, thr));
            }
        }
        best
    }
}

/// Trains the ensemble on `encoding`-encoded records of `train`.
pub fn train_forest(train: &Cohort, encoding: FeatureEncoding, cfg: &ForestConfig) -> Result<TreeEnsemble, BaselineError> {
    if train.n_pos() == 0 || train.n_neg() == 0 {
        return Err(BaselineError::OneClassOnly);
    }
    if cfg.n_trees == 0 {
        return Err(BaselineError::InvalidConfig("n_trees must be positive".into()));
    }
    let x = encoding.encode_cohort(train)?;
    let y = train.labels();
    let n = x.len();
    let p = encoding.width();
    let mtry = cfg
        .max_features
        .unwrap_or_else(|| (p as f64).sqrt().floor() as usize)
        .clamp(1, p);
    let tree_seeds: Vec<u64> = (0..cfg.n_trees)
        .map(|t| rng::derive(cfg.seed, &format!("tree{t}")))
        .collect();
    let grower = Grower { x: &x, y: &y, mtry };

    let grown: Vec<(Tree, Vec<(usize, f64)>)> = tree_seeds
        .par_iter()
        .map(|&seed| {
            let mut r = rng::seeded(seed);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[r.random_range(0..n)] += 1;
            }
            let samples: Vec<(usize, f64)> = (0..n)
                .filter(|&i| counts[i] > 0)
                .map(|i| (i, f64::from(counts[i])))
                .collect();
            let tree = grower.grow(samples, &mut r);
            let oob = (0..n).filter(|&i| counts[i] == 0).map(|i| (i, tree.predict(&x[i]))).collect();
            (tree, oob)
        })
        .collect();

    let mut sum = vec![0.0; n];
    let mut hits = vec![0u32; n];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, oob) in grown {
        for (i, p) in oob {
            sum[i] += p;
            hits[i] += 1;
        }
        trees.push(tree);
    }
    let (oob_scores, oob_labels): (Vec<f64>, Vec<bool>) = (0..n)
        .filter(|&i| hits[i] > 0)
        .map(|i| (sum[i] / f64::from(hits[i]), y[i]))
        .unzip();
    let oob_score = (!oob_scores.is_empty()).then(|| {
        oob_scores
            .iter()
            .zip(&oob_labels)
            .filter(|(s, l)| (**s > 0.5) == **l)
            .count() as f64
            / oob_scores.len() as f64
    });
    let oob_auc = ScoredLabels::new(oob_scores, oob_labels).ok().and_then(|d| auc(&d).ok());
    Ok(TreeEnsemble {
        encoding,
        max_features: mtry,
        tree_seeds,
        trees,
        oob_score,
        oob_auc,
    })
}

/// Symptoms-and-demographics model.
pub fn train_symptoms_model(train: &Cohort, cfg: &ForestConfig) -> Result<TreeEnsemble, BaselineError> {
    train_forest(train, FeatureEncoding::symptoms(train)?, cfg)
}

impl TreeEnsemble {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn to_json(&self) -> Result<String, BaselineError> {
        serde_json::to_string_pretty(self).map_err(|e| BaselineError::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self, BaselineError> {
        serde_json::from_str(s).map_err(|e| BaselineError::Serde(e.to_string()))
    }
}

/// Mean positive leaf fraction over trees, per record.
pub fn predict_proba(model: &TreeEnsemble, c: &Cohort) -> Result<Vec<f64>, BaselineError> {
    let x = model.encoding.encode_cohort(c)?;
    Ok(x.par_iter().map(|row| model.predict_row(row)).collect())
}
