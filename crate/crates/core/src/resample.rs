//! Balanced subsampling of a pool into a simulated general-population test
//! set with fixed symptomatic fractions, 1:1 gender within each class and,
//! optionally, identical age-bin distributions across classes.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cohort, Gender};
use crate::matching::{age_bin, age_bin_label, AGE_BIN_COUNT};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("pool cell {cell} needs {needed} records but has {available}")]
    InsufficientPool {
        cell: String,
        needed: usize,
        available: usize,
    },
    #[error("invalid population spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub n_pos: usize,
    pub n_neg: usize,
    pub p_sym_pos: f64,
    pub p_sym_neg: f64,
    pub equalize_age: bool,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn new(n_pos: usize, n_neg: usize, p_sym_neg: f64, seed: u64) -> Self {
        PopulationSpec {
            n_pos,
            n_neg,
            p_sym_pos: 0.65,
            p_sym_neg,
            equalize_age: true,
            seed,
        }
    }

    fn validate(&self) -> Result<(), ResampleError> {
        for (name, p) in [("p_sym_pos", self.p_sym_pos), ("p_sym_neg", self.p_sym_neg)] {
            if !(p > 0.0 && p < 1.0) {
                return Err(ResampleError::InvalidSpec(format!("{name} = {p} is not in (0, 1)")));
            }
        }
        if self.n_pos == 0 || self.n_neg == 0 {
            return Err(ResampleError::InvalidSpec("n_pos and n_neg must be positive".into()));
        }
        Ok(())
    }
}

/// Round half up, so counts are reproducible bit for bit.
pub fn symptomatic_count(n: usize, p: f64) -> usize {
    (n as f64 * p + 0.5).floor() as usize
}

/// Target counts per (symptomatic, gender) for one class.
fn cell_targets(n: usize, p_sym: f64) -> [(bool, Gender, usize); 4] {
    let sym = symptomatic_count(n, p_sym);
    let asym = n - sym;
    let male_total = n.div_ceil(2);
    let male_sym = sym.div_ceil(2).min(male_total);
    let male_asym = male_total - male_sym;
    [
        (true, Gender::Male, male_sym),
        (true, Gender::Female, sym - male_sym),
        (false, Gender::Male, male_asym),
        (false, Gender::Female, asym - male_asym),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellCount {
    pub label: bool,
    pub symptomatic: bool,
    pub gender: Gender,
    pub age_bin: String,
    pub achieved: usize,
    pub available: usize,
    /// The cell's pool was used up.
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub cells: Vec<CellCount>,
    pub total: usize,
}

type CellKey = (bool, bool, Gender, u32);

fn class_name(label: bool) -> &'static str {
    if label {
        "positive"
    } else {
        "negative"
    }
}

fn cell_name(label: bool, sym: bool, g: Gender, bin: Option<u32>) -> String {
    let mut s = format!(
        "{}|{}|{}",
        class_name(label),
        if sym { "symptomatic" } else { "asymptomatic" },
        g.as_str()
    );
    if let Some(b) = bin {
        s.push('|');
        s.push_str(&age_bin_label(b));
    }
    s
}

/// Splits `n` over `weights` (summing to 1) by largest remainder; ties go
/// to the lower index.
fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * n as f64).collect();
    let mut out: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if weights[i] > 0.0 {
            out[i] += 1;
            left -= 1;
        }
    }
    out
}

/// Edmonds-Karp on a dense capacity matrix. Returns the flow matrix.
fn max_flow(cap: &[Vec<usize>], s: usize, t: usize) -> (usize, Vec<Vec<i64>>) {
    let n = cap.len();
    let mut flow = vec![vec![0i64; n]; n];
    let mut total = 0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for v in 0..n {
                if prev[v] == usize::MAX && cap[u][v] as i64 - flow[u][v] > 0 {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        if prev[t] == usize::MAX {
            return (total, flow);
        }
        let mut push = i64::MAX;
        let mut v = t;
        while v != s {
            let u = prev[v];
            push = push.min(cap[u][v] as i64 - flow[u][v]);
            v = u;
        }
        let mut v = t;
        while v != s {
            let u = prev[v];
            flow[u][v] += push;
            flow[v][u] -= push;
            v = u;
        }
        total += push as usize;
    }
}

/// Allocates one class's cell targets across age bins so that the bin
/// totals equal `bin_totals` and no (cell, bin) exceeds its availability.
fn allocate_bins(
    cells: &[(bool, Gender, usize)],
    bin_totals: &[usize],
    avail: impl Fn(bool, Gender, u32) -> usize,
) -> Option<Vec<Vec<usize>>> {
    let nb = bin_totals.len();
    let nc = cells.len();
    let (s, t) = (0, 1 + nc + nb);
    let n_total: usize = bin_totals.iter().sum();
    let build = |tight: bool| {
        let mut cap = vec![vec![0usize; t + 1]; t + 1];
        for (i, &(sym, g, k)) in cells.iter().enumerate() {
            cap[s][1 + i] = k;
            for b in 0..nb {
                let a = avail(sym, g, b as u32);
                let target = if n_total == 0 {
                    0.0
                } else {
                    k as f64 * bin_totals[b] as f64 / n_total as f64
                };
                cap[1 + i][1 + nc + b] = if tight { a.min(target.ceil() as usize) } else { a };
            }
        }
        for (b, &bt) in bin_totals.iter().enumerate() {
            cap[1 + nc + b][t] = bt;
        }
        cap
    };
    // Stay close to proportional first, then allow any feasible layout.
    for tight in [true, false] {
        let (f, flow) = max_flow(&build(tight), s, t);
        if f == n_total {
            return Some(
                (0..nc)
                    .map(|i| (0..nb).map(|b| flow[1 + i][1 + nc + b].max(0) as usize).collect())
                    .collect(),
            );
        }
    }
    None
}

pub fn resample_general_population(pool: &Cohort, spec: &PopulationSpec) -> Result<(Cohort, ResampleReport), ResampleError> {
    spec.validate()?;
    let nb = AGE_BIN_COUNT as usize;
    let mut by_cell: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in pool.iter().enumerate() {
        if r.gender == Gender::Other {
            continue;
        }
        by_cell
            .entry((r.label, r.symptoms.any_symptom(), r.gender, age_bin(r.age_years)))
            .or_default()
            .push(i);
    }
    let avail = |label: bool, sym: bool, g: Gender, b: u32| by_cell.get(&(label, sym, g, b)).map_or(0, Vec::len);

    let classes = [
        (true, cell_targets(spec.n_pos, spec.p_sym_pos), spec.n_pos),
        (false, cell_targets(spec.n_neg, spec.p_sym_neg), spec.n_neg),
    ];
    for (label, cells, _) in &classes {
        for &(sym, g, k) in cells {
            let a: usize = (0..nb as u32).map(|b| avail(*label, sym, g, b)).sum();
            if a < k {
                return Err(ResampleError::InsufficientPool {
                    cell: cell_name(*label, sym, g, None),
                    needed: k,
                    available: a,
                });
            }
        }
    }

    // Draw counts per (label, sym, gender, bin).
    let mut draws: BTreeMap<CellKey, usize> = BTreeMap::new();
    if spec.equalize_age {
        let class_avail = |label: bool| -> Vec<f64> {
            let per_bin: Vec<f64> = (0..nb as u32)
                .map(|b| {
                    [(true, Gender::Male), (true, Gender::Female), (false, Gender::Male), (false, Gender::Female)]
                        .iter()
                        .map(|&(s, g)| avail(label, s, g, b))
                        .sum::<usize>() as f64
                })
                .collect();
            let total: f64 = per_bin.iter().sum();
            per_bin.iter().map(|x| x / total).collect()
        };
        let (ap, an) = (class_avail(true), class_avail(false));
        let env: Vec<f64> = ap.iter().zip(&an).map(|(a, b)| a.min(*b)).collect();
        let z: f64 = env.iter().sum();
        let weights: Vec<f64> = env.iter().map(|e| e / z).collect();
        for (label, cells, n) in &classes {
            let bins = largest_remainder(*n, &weights);
            let alloc = allocate_bins(cells, &bins, |s, g, b| avail(*label, s, g, b)).ok_or_else(|| {
                let reachable: usize = cells
                    .iter()
                    .map(|&(s, g, _)| (0..nb as u32).map(|b| avail(*label, s, g, b)).sum::<usize>())
                    .sum();
                ResampleError::InsufficientPool {
                    cell: format!("{}|age-equalised", class_name(*label)),
                    needed: *n,
                    available: reachable.min(*n - 1),
                }
            })?;
            for (ci, &(s, g, _)) in cells.iter().enumerate() {
                for b in 0..nb {
                    draws.insert((*label, s, g, b as u32), alloc[ci][b]);
                }
            }
        }
    }

    let mut chosen: Vec<usize> = Vec::with_capacity(spec.n_pos + spec.n_neg);
    let mut report = Vec::new();
    let empty = Vec::new();
    for (label, cells, _) in &classes {
        for &(sym, g, k) in cells {
            if spec.equalize_age {
                for b in 0..nb as u32 {
                    let key = (*label, sym, g, b);
                    let want = draws[&key];
                    let members = by_cell.get(&key).unwrap_or(&empty);
                    let name = cell_name(*label, sym, g, Some(b));
                    let mut r = rng::seeded(rng::derive(spec.seed, &name));
                    chosen.extend(index::sample(&mut r, members.len(), want).iter().map(|j| members[j]));
                    report.push(CellCount {
                        label: *label,
                        symptomatic: sym,
                        gender: g,
                        age_bin: age_bin_label(b),
                        achieved: want,
                        available: members.len(),
                        shortfall: want == members.len() && want > 0,
                    });
                }
            } else {
                let members: Vec<usize> = (0..nb as u32)
                    .flat_map(|b| by_cell.get(&(*label, sym, g, b)).unwrap_or(&empty).iter().copied())
                    .collect();
                let name = cell_name(*label, sym, g, None);
                let mut r = rng::seeded(rng::derive(spec.seed, &name));
                let picked: Vec<usize> = index::sample(&mut r, members.len(), k).iter().map(|j| members[j]).collect();
                for b in 0..nb as u32 {
                    let achieved = picked.iter().filter(|&&i| age_bin(pool.records()[i].age_years) == b).count();
                    let available = avail(*label, sym, g, b);
                    report.push(CellCount {
                        label: *label,
                        symptomatic: sym,
                        gender: g,
                        age_bin: age_bin_label(b),
                        achieved,
                        available,
                        shortfall: achieved == available && achieved > 0,
                    });
                }
                chosen.extend(picked);
            }
        }
    }
    chosen.sort_unstable();
    let step = format!(
        "resample: n_pos={} n_neg={} p_sym_pos={} p_sym_neg={} equalize_age={} seed={}",
        spec.n_pos, spec.n_neg, spec.p_sym_pos, spec.p_sym_neg, spec.equalize_age, spec.seed
    );
    let total = chosen.len();
    Ok((pool.select(&chosen, step), ResampleReport { cells: report, total }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Manifest, ParticipantRecord};
    use rand::Rng;
    use std::collections::HashSet;

    /// Pool with every (label, symptomatic, gender) combination, ages
    /// uniform over 18..=85.
    fn pool(n: usize, seed: u64) -> Cohort {
        let mut r = rng::seeded(seed);
        let records = (0..n)
            .map(|i| {
                let mut rec = ParticipantRecord::new(format!("P{i:06}"), r.random::<bool>());
                rec.symptoms.cough = r.random::<f64>() < 0.5;
                rec.gender = if r.random::<bool>() { Gender::Male } else { Gender::Female };
                rec.age_years = r.random_range(18..=85);
                rec
            })
            .collect();
        Cohort::new(records, Manifest::new("pool", None, n)).unwrap()
    }

    fn count(c: &Cohort, f: impl Fn(&ParticipantRecord) -> bool) -> usize {
        c.iter().filter(|r| f(r)).count()
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(symptomatic_count(100, 0.65), 65);
        assert_eq!(symptomatic_count(10, 0.25), 3);
        assert_eq!(symptomatic_count(10, 0.35), 4);
        assert_eq!(symptomatic_count(100, 0.2), 20);
    }

    #[test]
    fn exact_cell_counts() {
        let p = pool(4000, 1);
        let spec = PopulationSpec::new(100, 100, 0.20, 7);
        let (c, rep) = resample_general_population(&p, &spec).unwrap();
        assert_eq!(c.len(), 200);
        assert_eq!(rep.total, 200);
        assert_eq!(rep.cells.iter().map(|x| x.achieved).sum::<usize>(), 200);
        assert_eq!(count(&c, |r| r.label && r.symptoms.any_symptom()), 65);
        assert_eq!(count(&c, |r| r.label && !r.symptoms.any_symptom()), 35);
        assert_eq!(count(&c, |r| !r.label && r.symptoms.any_symptom()), 20);
        assert_eq!(count(&c, |r| !r.label && !r.symptoms.any_symptom()), 80);
        for label in [true, false] {
            assert_eq!(count(&c, |r| r.label == label && r.gender == Gender::Male), 50);
            assert_eq!(count(&c, |r| r.label == label && r.gender == Gender::Female), 50);
        }
        let ids: HashSet<&str> = c.ids().into_iter().collect();
        assert_eq!(ids.len(), 200);
    }

    #[test]
    fn age_bins_match_across_classes() {
        for seed in 0..5 {
            let p = pool(6000, seed);
            let (c, _) = resample_general_population(&p, &PopulationSpec::new(150, 150, 0.3, seed)).unwrap();
            for b in 0..AGE_BIN_COUNT {
                let pos = count(&c, |r| r.label && age_bin(r.age_years) == b);
                let neg = count(&c, |r| !r.label && age_bin(r.age_years) == b);
                assert!(pos.abs_diff(neg) <= 1, "seed {seed} bin {b}: {pos} vs {neg}");
            }
        }
    }

    #[test]
    fn age_envelope_follows_scarcer_class() {
        // Positives are all young: negatives must follow their age profile.
        let mut records = Vec::new();
        for i in 0..400 {
            let mut r = ParticipantRecord::new(format!("A{i}"), i % 2 == 0);
            r.symptoms.cough = (i / 2) % 2 == 0;
            r.gender = if (i / 4) % 2 == 0 { Gender::Male } else { Gender::Female };
            r.age_years = if r.label { 20 + (i % 15) as u32 } else { 20 + (i % 60) as u32 };
            records.push(r);
        }
        let p = Cohort::new(records, Manifest::new("pool", None, 400)).unwrap();
        let spec = PopulationSpec {
            p_sym_pos: 0.5,
            ..PopulationSpec::new(40, 40, 0.5, 3)
        };
        let (c, _) = resample_general_population(&p, &spec).unwrap();
        assert!(c.iter().all(|r| r.age_years < 38));
    }

    #[test]
    fn insufficient_symptomatic_negatives() {
        let p = pool(4000, 2).filter("asymptomatic negatives only", |r| r.label || !r.symptoms.any_symptom());
        let err = resample_general_population(&p, &PopulationSpec::new(50, 50, 0.2, 1)).unwrap_err();
        match err {
            ResampleError::InsufficientPool { cell, needed, available } => {
                assert!(cell.starts_with("negative|symptomatic"), "{cell}");
                assert_eq!(available, 0);
                assert!(needed > 0);
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let p = pool(3000, 4);
        let spec = PopulationSpec::new(80, 120, 0.1, 11);
        let (a, _) = resample_general_population(&p, &spec).unwrap();
        let (b, _) = resample_general_population(&p, &spec).unwrap();
        assert_eq!(a.ids(), b.ids());
        let (c, _) = resample_general_population(&p, &PopulationSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.ids(), c.ids());
    }

    #[test]
    fn without_age_equalisation() {
        let p = pool(3000, 5);
        let spec = PopulationSpec {
            equalize_age: false,
            ..PopulationSpec::new(101, 99, 0.3, 2)
        };
        let (c, rep) = resample_general_population(&p, &spec).unwrap();
        assert_eq!(c.n_pos(), 101);
        assert_eq!(c.n_neg(), 99);
        assert_eq!(rep.cells.iter().map(|x| x.achieved).sum::<usize>(), 200);
        assert_eq!(count(&c, |r| r.label && r.gender == Gender::Male), 51);
        assert_eq!(count(&c, |r| !r.label && r.symptoms.any_symptom()), 30);
    }

    #[test]
    fn largest_remainder_sums() {
        assert_eq!(largest_remainder(10, &[0.25, 0.25, 0.5]), vec![3, 2, 5]);
        assert_eq!(largest_remainder(7, &[0.0, 1.0]), vec![0, 7]);
    }
}
