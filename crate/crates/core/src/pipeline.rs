//! End-to-end pipelines driven by a serialisable [`RunConfig`].
//!
//! Every stage seed is derived from the run seed, so a bundle is a pure
//! function of the config plus its input files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::{predict_proba, train_forest, train_symptoms_model, BaselineError, FeatureEncoding, ForestConfig};
use crate::data::{load_cohort, load_features, split_cohort, Cohort, ColumnMap, DataError, SplitSpec};
use crate::matching::{check_disjoint, match_exact, MatchError, MatchSpec};
use crate::metrics::{
    auc_ci, calibration_bins, delong_test, roc_curve, stratified_auc, table_2x2_stats, CiMethod, MetricsError,
    ScoredLabels, Table2x2,
};
use crate::probes::{nn_substitute, weak_robust_curate, NnResult, ProbeError, Rescore, WeakProbeConfig, WeakRobustResult};
use crate::report::{emit_figure, EuSeries, FigureData, FigureKind, ForestRow, ReportError, RocSeries, FOREST_REFERENCE};
use crate::rng;
use crate::synth::{calibration_cohort, synth_cohort, Enrolment, SynthConfig, SynthError};
use crate::utility::{max_eu_curve, pi_grid, UtilityError, UtilityParams};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("matching: {0}")]
    Matching(#[from] MatchError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("utility: {0}")]
    Utility(#[from] UtilityError),
    #[error("probes: {0}")]
    Probe(#[from] ProbeError),
    #[error("baseline: {0}")]
    Baseline(#[from] BaselineError),
    #[error("report: {0}")]
    Report(#[from] ReportError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// synth → enrol → split → train on features → match → eval → utility → probes.
    BiasDemo,
    /// Scored cohort from disk → match → eval → utility (→ probes when
    /// features and a calibration cohort are supplied).
    Evaluate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    /// Cohort CSV in canonical columns; needs a `score` column for `evaluate`.
    pub cohort: PathBuf,
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default)]
    pub calibration_cohort: Option<PathBuf>,
    #[serde(default)]
    pub calibration_features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingBlock {
    /// `test` or `train`.
    pub preset: String,
    /// Overrides the preset's covariates.
    pub covariates: Option<Vec<String>>,
    pub include_channel: Option<bool>,
}

impl Default for MatchingBlock {
    fn default() -> Self {
        MatchingBlock {
            preset: "test".into(),
            covariates: None,
            include_channel: None,
        }
    }
}

impl MatchingBlock {
    pub fn spec(&self, seed: u64) -> Result<MatchSpec, PipelineError> {
        let mut spec = MatchSpec::preset(&self.preset, seed)
            .ok_or_else(|| PipelineError::Config(format!("unknown matching preset `{}`", self.preset)))?;
        if let Some(c) = &self.covariates {
            spec = MatchSpec::new(spec.include_channel, c.clone(), seed)?;
        }
        if let Some(ch) = self.include_channel {
            spec.include_channel = ch;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UtilityBlock {
    pub r_t: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub pi_max: f64,
    pub n_points: usize,
}

impl Default for UtilityBlock {
    fn default() -> Self {
        UtilityBlock {
            r_t: 1.5,
            epsilon: 0.2,
            delta: 0.0,
            pi_max: 0.1,
            n_points: 101,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StratifiedBlock {
    pub min_per_class: usize,
    pub fdr_q: f64,
    /// Dashed reference line of the forest plot.
    pub reference: f64,
}

impl Default for StratifiedBlock {
    fn default() -> Self {
        StratifiedBlock {
            min_per_class: 5,
            fdr_q: 0.05,
            reference: FOREST_REFERENCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeBlock {
    pub enabled: bool,
    /// Probes run on a class-balanced random subsample of this many records
    /// per class from the evaluation set.
    pub subsample_per_class: usize,
    /// Size of the synthetic calibration cohort (`bias_demo` only).
    pub calibration_size: usize,
    pub weak: WeakProbeConfig,
}

impl Default for ProbeBlock {
    fn default() -> Self {
        ProbeBlock {
            enabled: true,
            subsample_per_class: 2000,
            calibration_size: 2000,
            weak: WeakProbeConfig {
                k_max: 16,
                nn_components: Some(4),
                ..Default::default()
            },
        }
    }
}

/// Full description of one run. `seed` fields inside the nested blocks are
/// overwritten with stage seeds derived from the top-level `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineKind,
    pub seed: u64,
    pub input: Option<InputPaths>,
    pub synth: SynthConfig,
    pub train_fraction: f64,
    pub forest: ForestConfig,
    /// Also train the symptoms-and-demographics baseline (`bias_demo`).
    pub symptoms_baseline: bool,
    pub matching: MatchingBlock,
    pub ci_level: f64,
    pub calibration_bins: usize,
    pub utility: UtilityBlock,
    pub stratified: StratifiedBlock,
    pub probe: ProbeBlock,
}

/// Synthetic cohort of the bias demo: no true signal, features driven by
/// covariates, symptoms-based enrolment.
pub fn bias_demo_synth() -> SynthConfig {
    SynthConfig {
        n_population: 60_000,
        prevalence: 0.3,
        enrolment: Enrolment::SymptomsBased {
            w_sym_pos: 0.9,
            w_asym_pos: 0.05,
            w_sym_neg: 0.3,
            w_asym_neg: 0.2,
        },
        signal_strength: 0.0,
        confounder_strength: 2.0,
        ..Default::default()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: PipelineKind::BiasDemo,
            seed: 0,
            input: None,
            synth: bias_demo_synth(),
            train_fraction: 0.5,
            forest: ForestConfig::default(),
            symptoms_baseline: true,
            matching: MatchingBlock::default(),
            ci_level: 0.95,
            calibration_bins: 10,
            utility: UtilityBlock::default(),
            stratified: StratifiedBlock::default(),
            probe: ProbeBlock::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let s = fs::read_to_string(path.as_ref())
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        hex_sha256(serde_json::to_string(self).expect("config serialises").as_bytes())
    }

    pub fn stage_seeds(&self) -> BTreeMap<String, u64> {
        ["synth", "split", "forest", "matching", "probe", "calibration", "subsample"]
            .iter()
            .map(|s| (s.to_string(), rng::derive(self.seed, s)))
            .collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} must be in (0, 1)", self.train_fraction));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return bad(format!("ci_level {} must be in (0, 1)", self.ci_level));
        }
        if self.calibration_bins == 0 {
            return bad("calibration_bins must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.utility.pi_max) || self.utility.n_points == 0 {
            return bad("utility.pi_max must be in [0, 1] and n_points positive".into());
        }
        if self.pipeline == PipelineKind::Evaluate && self.input.is_none() {
            return bad("pipeline `evaluate` needs an `input` block".into());
        }
        if self.probe.enabled && self.probe.subsample_per_class == 0 {
            return bad("probe.subsample_per_class must be positive".into());
        }
        self.matching.spec(0)?;
        UtilityParams::new(self.utility.r_t, self.utility.epsilon, self.utility.delta)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.pipeline == PipelineKind::BiasDemo {
            self.synth.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: RunConfig,
    pub seeds: BTreeMap<String, u64>,
    /// SHA-256 of each input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of each output file, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_seconds: f64,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let m: RunManifest = serde_json::from_str(s).map_err(|e| PipelineError::Config(format!("manifest: {e}")))?;
        if m.config.hash() != m.config_sha256 {
            return Err(PipelineError::Config("manifest config does not match its recorded hash".into()));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    /// `name.svg` → document.
    pub figures: BTreeMap<String, String>,
    /// `name.csv` → table.
    pub tables: BTreeMap<String, String>,
    pub manifest: RunManifest,
}

impl ReportBundle {
    /// Writes every figure, table and `manifest.json` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<(), PipelineError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        for (name, body) in self.figures.iter().chain(&self.tables) {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("manifest.json"), self.manifest.to_json())?;
        Ok(())
    }
}

struct Builder {
    figures: BTreeMap<String, String>,
    tables: BTreeMap<String, String>,
    summary: Vec<(String, String)>,
    notes: Vec<String>,
}

impl Builder {
    fn figure(&mut self, name: &str, kind: FigureKind, data: &FigureData) -> Result<(), PipelineError> {
        let fig = emit_figure(kind, data)?;
        self.figures.insert(format!("{name}.svg"), fig.svg);
        self.tables.insert(format!("{name}.csv"), fig.csv);
        Ok(())
    }

    fn stat(&mut self, name: &str, v: impl ToString) {
        self.summary.push((name.to_string(), v.to_string()));
    }
}

fn scored(c: &Cohort) -> Result<ScoredLabels, PipelineError> {
    Ok(ScoredLabels::from_cohort(c)?)
}

fn roc_series(label: &str, d: &ScoredLabels, level: f64) -> Result<RocSeries, PipelineError> {
    let ci = auc_ci(d, CiMethod::Delong, level)?;
    Ok(RocSeries {
        label: label.to_string(),
        curve: roc_curve(d)?,
        auc: ci.estimate,
        ci: Some(ci),
    })
}

/// Class-balanced random subsample, at most `per_class` of each class.
pub fn balanced_subsample(c: &Cohort, per_class: usize, seed: u64) -> Cohort {
    let mut r = rng::seeded(seed);
    let mut pos: Vec<usize> = (0..c.len()).filter(|&i| c.records()[i].label).collect();
    let mut neg: Vec<usize> = (0..c.len()).filter(|&i| !c.records()[i].label).collect();
    pos.shuffle(&mut r);
    neg.shuffle(&mut r);
    let k = per_class.min(pos.len()).min(neg.len());
    let mut idx: Vec<usize> = pos[..k].iter().chain(&neg[..k]).copied().collect();
    idx.sort_unstable();
    c.select(&idx, format!("balanced subsample of {k} per class (seed {seed})"))
}

/// Runs the configured pipeline.
pub fn run_pipeline(cfg: &RunConfig) -> Result<ReportBundle, PipelineError> {
    cfg.validate()?;
    let started = Instant::now();
    let seeds = cfg.stage_seeds();
    let mut b = Builder {
        figures: BTreeMap::new(),
        tables: BTreeMap::new(),
        summary: Vec::new(),
        notes: Vec::new(),
    };
    let mut inputs = BTreeMap::new();

    // Evaluation set (scored), optional symptoms-model scores, calibration cohort.
    let (eval_set, symptom_scores, calibration, enrolled) = match cfg.pipeline {
        PipelineKind::BiasDemo => {
            let synth = SynthConfig {
                seed: seeds["synth"],
                ..cfg.synth.clone()
            };
            let (population, enrolled) = synth_cohort(&synth)?;
            let split = SplitSpec {
                train_fraction: cfg.train_fraction,
                seed: seeds["split"],
            };
            let (train, test) = split_cohort(&enrolled, &split)?;
            check_disjoint(&train, &test)?;
            let forest = ForestConfig {
                seed: seeds["forest"],
                ..cfg.forest.clone()
            };
            let model = train_forest(&train, FeatureEncoding::fit(&train, &[], true)?, &forest)?;
            let test_scored = test.with_scores(&predict_proba(&model, &test)?)?;
            let symptom_scores = if cfg.symptoms_baseline {
                let m = train_symptoms_model(&train, &forest)?;
                Some(predict_proba(&m, &test)?)
            } else {
                None
            };
            let calibration = if cfg.probe.enabled {
                Some(calibration_cohort(&synth, cfg.probe.calibration_size, seeds["calibration"])?)
            } else {
                None
            };
            b.stat("n_population", population.len());
            b.stat("n_enrolled", enrolled.len());
            b.stat("n_train", train.len());
            if let Some(oob) = model.oob_auc {
                b.stat("oob_auc", oob);
            }
            (test_scored, symptom_scores, calibration, enrolled)
        }
        PipelineKind::Evaluate => {
            let input = cfg.input.as_ref().expect("validated");
            let mut record = |p: &Path| -> Result<(), PipelineError> {
                inputs.insert(p.display().to_string(), hex_sha256(&fs::read(p)?));
                Ok(())
            };
            record(&input.cohort)?;
            let mut cohort = load_cohort(&input.cohort, &ColumnMap::identity())?;
            if let Some(f) = &input.features {
                record(f)?;
                cohort = load_features(f, &cohort)?;
            }
            let calibration = match (&input.calibration_cohort, &input.calibration_features) {
                (Some(c), Some(f)) if cfg.probe.enabled => {
                    record(c)?;
                    record(f)?;
                    let cal = load_cohort(c, &ColumnMap::identity())?;
                    Some(load_features(f, &cal)?)
                }
                (Some(_), None) | (None, Some(_)) => {
                    return Err(PipelineError::Config(
                        "calibration_cohort and calibration_features must be given together".into(),
                    ))
                }
                _ => None,
            };
            (cohort.clone(), None, calibration, cohort)
        }
    };

    let d_all = scored(&eval_set)?;
    let spec = cfg.matching.spec(seeds["matching"])?;
    let (matched, balance) = match_exact(&eval_set, &spec)?;
    let d_matched = scored(&matched)?;
    b.stat("n_eval", eval_set.len());
    b.stat("n_matched", matched.len());
    b.stat("strata_dropped", balance.strata_dropped);

    let mut roc = vec![
        roc_series("randomised", &d_all, cfg.ci_level)?,
        roc_series("matched", &d_matched, cfg.ci_level)?,
    ];
    if let Some(s) = &symptom_scores {
        let d_sym = ScoredLabels::new(s.clone(), eval_set.labels())?;
        roc.push(roc_series("symptoms baseline", &d_sym, cfg.ci_level)?);
        let t = delong_test(&d_all, &d_sym)?;
        b.stat("delong_features_vs_symptoms_p", t.p);
    }
    for s in &roc {
        let key = s.label.replace(' ', "_");
        b.stat(&format!("auc_{key}"), s.auc);
        if let Some(ci) = &s.ci {
            b.stat(&format!("auc_{key}_ci_lower"), ci.lower);
            b.stat(&format!("auc_{key}_ci_upper"), ci.upper);
        }
    }

    let params = UtilityParams::new(cfg.utility.r_t, cfg.utility.epsilon, cfg.utility.delta)?;
    let grid = pi_grid(cfg.utility.pi_max, cfg.utility.n_points);
    let eu = roc
        .iter()
        .map(|s| {
            Ok(EuSeries {
                label: s.label.clone(),
                points: max_eu_curve(&s.curve, &params, &grid)?,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    b.figure("roc", FigureKind::RocComparison, &FigureData::Roc(roc))?;
    b.figure("eu", FigureKind::MaxEuVsPrevalence, &FigureData::MaxEu(eu))?;

    match stratified_auc(&matched, &spec, cfg.stratified.min_per_class, cfg.stratified.fdr_q) {
        Ok(strata) => {
            b.stat("strata_evaluated", strata.len());
            b.stat("strata_fdr_rejections", strata.iter().filter(|s| s.fdr_reject).count());
            b.stat("strata_ci_covering_reference", strata.iter().filter(|s| s.ci.covers(cfg.stratified.reference)).count());
            let rows = strata
                .iter()
                .map(|s| ForestRow {
                    label: s.key.clone(),
                    n_pos: s.n_pos,
                    n_neg: s.n_neg,
                    auc: s.auc,
                    lower: s.ci.lower,
                    upper: s.ci.upper,
                })
                .collect();
            b.figure(
                "strata",
                FigureKind::StratifiedForest,
                &FigureData::Forest {
                    rows,
                    reference: cfg.stratified.reference,
                },
            )?;
        }
        Err(e @ MetricsError::NoEligibleStrata(_)) => b.notes.push(format!("strata skipped: {e}")),
        Err(e) => return Err(e.into()),
    }

    let cal = calibration_bins(d_all.scores(), d_all.labels(), cfg.calibration_bins)?;
    b.stat("ece", cal.ece);
    b.figure("calibration", FigureKind::Calibration, &FigureData::Calibration(cal))?;

    let table = Table2x2::from_pairs(enrolled.iter().map(|r| (r.symptoms.any_symptom(), r.label)));
    match table_2x2_stats(&table) {
        Ok(stats) => b.figure(
            "two_by_two",
            FigureKind::TwoByTwo,
            &FigureData::TwoByTwo {
                predictor: "any_symptom".into(),
                table,
                stats,
            },
        )?,
        Err(e) => b.notes.push(format!("two_by_two skipped: {e}")),
    }

    match (cfg.probe.enabled, calibration, eval_set.feature_dim()) {
        (true, Some(cal), Some(_)) => {
            let probe_set = balanced_subsample(&eval_set, cfg.probe.subsample_per_class, seeds["subsample"]);
            let weak_cfg = WeakProbeConfig {
                seed: seeds["probe"],
                ..cfg.probe.weak.clone()
            };
            let wr = weak_robust_curate(&probe_set, &cal, &weak_cfg)?;
            let nn = nn_substitute(&probe_set, &weak_cfg, Rescore::CopyNeighbourScore)?;
            probe_stats(&mut b, &wr, &nn);
            b.tables.insert("nn.csv".into(), nn_csv(&nn)?);
            b.figure("probe", FigureKind::WeakRobustCurve, &FigureData::WeakRobust(wr))?;
        }
        (true, _, _) => b.notes.push("probes skipped: need feature vectors and a calibration cohort".into()),
        _ => {}
    }

    let mut summary = csv::Writer::from_writer(Vec::new());
    summary.write_record(["metric", "value"]).map_err(|e| PipelineError::Report(ReportError::Csv(e.to_string())))?;
    for (k, v) in &b.summary {
        summary.write_record([k, v]).map_err(|e| PipelineError::Report(ReportError::Csv(e.to_string())))?;
    }
    let summary = summary.into_inner().map_err(|e| PipelineError::Report(ReportError::Csv(e.to_string())))?;
    b.tables.insert("summary.csv".into(), String::from_utf8(summary).expect("utf-8"));

    let outputs = b
        .figures
        .iter()
        .chain(&b.tables)
        .map(|(k, v)| (k.clone(), hex_sha256(v.as_bytes())))
        .collect();
    let manifest = RunManifest {
        tool: "confound-audit".into(),
        version: VERSION.into(),
        config_sha256: cfg.hash(),
        config: cfg.clone(),
        seeds,
        inputs,
        outputs,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        notes: b.notes,
    };
    Ok(ReportBundle {
        figures: b.figures,
        tables: b.tables,
        manifest,
    })
}

fn probe_stats(b: &mut Builder, wr: &WeakRobustResult, nn: &NnResult) {
    b.stat("weak_robust_baseline_auc", wr.baseline_auc);
    match wr.at_tau() {
        Some(step) => {
            b.stat("weak_robust_tau", step.k);
            if let Some(a) = step.curated_auc {
                b.stat("weak_robust_curated_auc_at_tau", a);
                b.stat("weak_robust_auc_drop_at_tau", wr.baseline_auc - a);
            }
        }
        None => b.stat("weak_robust_tau", "none"),
    }
    b.stat("nn_pre_auc", nn.pre_auc);
    b.stat("nn_post_auc", nn.post_auc);
    b.stat("nn_distinct_neighbours", nn.distinct_neighbours);
    b.stat("nn_attribution_flag", nn.attribution_flag);
}

fn nn_csv(nn: &NnResult) -> Result<String, PipelineError> {
    let err = |e: csv::Error| PipelineError::Report(ReportError::Csv(e.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["positive_id", "neighbour_id"]).map_err(err)?;
    for (p, n) in &nn.substitution {
        w.write_record([p, n]).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| PipelineError::Report(ReportError::Csv(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

/// Reruns the config recorded in a manifest.
pub fn rerun(manifest: &RunManifest) -> Result<ReportBundle, PipelineError> {
    run_pipeline(&manifest.config)
}
