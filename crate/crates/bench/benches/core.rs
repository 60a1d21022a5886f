use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use confound_audit::baseline::{train_forest, FeatureEncoding, ForestConfig};
use confound_audit::matching::{match_exact, MatchSpec};
use confound_audit::metrics::{auc, auc_ci, roc_curve, CiMethod};
use confound_audit::probes::{nn_substitute, pca_fit, FitScope, Rescore, WeakProbeConfig};
use confound_audit::utility::{default_pi_grid, max_eu_curve, UtilityParams};
use confound_audit_bench::{cohort, scored};

fn metrics(c: &mut Criterion) {
    let mut g = c.benchmark_group("metrics");
    for n in [1_000, 100_000] {
        let d = scored(n, 1);
        g.bench_with_input(BenchmarkId::new("auc", n), &d, |b, d| b.iter(|| auc(black_box(d)).unwrap()));
        g.bench_with_input(BenchmarkId::new("delong_ci", n), &d, |b, d| {
            b.iter(|| auc_ci(black_box(d), CiMethod::Delong, 0.95).unwrap())
        });
    }
    g.finish();
}

fn utility(c: &mut Criterion) {
    let roc = roc_curve(&scored(10_000, 2)).unwrap();
    let params = UtilityParams::new(1.5, 0.2, 0.0).unwrap();
    let grid = default_pi_grid();
    c.bench_function("max_eu_curve/10k", |b| b.iter(|| max_eu_curve(black_box(&roc), &params, &grid).unwrap()));
}

fn matching(c: &mut Criterion) {
    let co = cohort(20_000, 4, 3);
    let spec = MatchSpec::test_set(0);
    c.bench_function("match_exact/20k", |b| b.iter(|| match_exact(black_box(&co), &spec).unwrap()));
}

fn forest(c: &mut Criterion) {
    let co = cohort(2_000, 16, 4);
    let enc = FeatureEncoding::fit(&co, &[], true).unwrap();
    let cfg = ForestConfig { n_trees: 20, ..Default::default() };
    let mut g = c.benchmark_group("forest");
    g.sample_size(10);
    g.bench_function("train/2k x 16 x 20 trees", |b| b.iter(|| train_forest(black_box(&co), enc.clone(), &cfg).unwrap()));
    g.finish();
}

fn probes(c: &mut Criterion) {
    let co = cohort(2_000, 16, 5);
    let rows: Vec<Vec<f64>> = co.iter().map(|r| r.features.clone().unwrap()).collect();
    let mut g = c.benchmark_group("probes");
    g.sample_size(10);
    g.bench_function("pca/2k x 16", |b| b.iter(|| pca_fit(black_box(&rows), 16, FitScope::All).unwrap()));
    let cfg = WeakProbeConfig { nn_components: Some(4), ..Default::default() };
    g.bench_function("nn_substitute/2k", |b| {
        b.iter(|| nn_substitute(black_box(&co), &cfg, Rescore::CopyNeighbourScore).unwrap())
    });
    g.finish();
}

criterion_group!(benches, metrics, utility, matching, forest, probes);
criterion_main!(benches);
