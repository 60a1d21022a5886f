use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use confound_audit::baseline::{
    hybrid_encoding, hybrid_features, predict_proba, train_forest, Column, FeatureEncoding, ForestConfig,
    TreeEnsemble, AUDIO_SCORE, SYMPTOM_PREDICTORS,
};
use confound_audit::data::{attach_scores_csv, load_cohort, load_features, write_cohort, write_features, Cohort, ColumnMap};
use confound_audit::matching::{match_exact, MatchSpec};
use confound_audit::metrics::{
    auc_ci, calibration_bins, delong_test, pr_auc, roc_curve, stratified_auc, CiMethod, ScoredLabels,
};
use confound_audit::pipeline::{hex_sha256, run_pipeline, RunConfig, RunManifest, VERSION};
use confound_audit::probes::{nn_substitute, weak_robust_curate, Distance, Rescore, WeakProbeConfig};
use confound_audit::report::{emit_figure, FigureData, FigureKind};
use confound_audit::resample::{resample_general_population, PopulationSpec};
use confound_audit::synth::{calibration_cohort, synth_cohort, write_truth, Enrolment, SynthConfig};
use confound_audit::utility::{expected_utility, max_eu_curve, pi_grid, utility_matrix, UtilityParams};
use serde_json::{json, Value};

use crate::{
    BaselineCommand, Cli, CohortIn, Command, EnrolmentArg, EvalArgs, MatchArgs, ModelKind, NnArgs, PredictArgs,
    ProbeCommand, ReportArgs, ResampleArgs, SynthArgs, TrainArgs, UtilityArgs, WeakArgs, THREADS_ENV,
};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit 2.
    Config(String),
    /// Everything else; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn rt(prefix: &str) -> impl Fn(&dyn fmt::Display) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{prefix}: {e}"))
}

macro_rules! tri {
    ($prefix:expr, $e:expr) => {
        $e.map_err(|e| rt($prefix)(&e))?
    };
}

impl From<confound_audit::pipeline::PipelineError> for CliError {
    fn from(e: confound_audit::pipeline::PipelineError) -> Self {
        if e.exit_code() == 2 {
            CliError::Config(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

struct Ctx {
    seed: u64,
    outputs: Vec<PathBuf>,
}

impl Ctx {
    fn create(&mut self, path: &Path) -> Result<BufWriter<File>, CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            tri!("io", fs::create_dir_all(dir));
        }
        let f = File::create(path).map_err(|e| CliError::Runtime(format!("io: {}: {e}", path.display())))?;
        self.outputs.push(path.to_path_buf());
        Ok(BufWriter::new(f))
    }

    fn write(&mut self, path: Option<&Path>, body: &str) -> Result<(), CliError> {
        match path {
            Some(p) => {
                let mut w = self.create(p)?;
                tri!("io", w.write_all(body.as_bytes()));
                tri!("io", w.flush());
            }
            None => {
                tri!("io", io::stdout().write_all(body.as_bytes()));
            }
        }
        Ok(())
    }

    fn json(&mut self, path: Option<&Path>, v: &Value) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(v).expect("json value");
        s.push('\n');
        self.write(path, &s)
    }

    fn cohort(&mut self, c: &Cohort, out: &Path, features_out: Option<&Path>) -> Result<(), CliError> {
        let w = self.create(out)?;
        tri!("data", write_cohort(c, w));
        if let Some(f) = features_out {
            let w = self.create(f)?;
            tri!("data", write_features(c, w));
        }
        Ok(())
    }
}

fn threads(cli: &Cli) -> Result<Option<usize>, CliError> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        return v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("{THREADS_ENV}=`{v}` is not a positive integer")));
    }
    match cli.threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        t => Ok(t),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let n_threads = threads(cli)?;
    if let Some(n) = n_threads {
        tri!("threads", rayon::ThreadPoolBuilder::new().num_threads(n).build_global());
    }
    let mut ctx = Ctx {
        seed: cli.seed.unwrap_or(0),
        outputs: Vec::new(),
    };
    let (name, run_manifest) = match &cli.command {
        Command::Synth(a) => ("synth", synth(&mut ctx, a, cli.seed)?),
        Command::Match(a) => ("match", matching(&mut ctx, a)?),
        Command::Resample(a) => ("resample", resample(&mut ctx, a)?),
        Command::Eval(a) => ("eval", eval(&mut ctx, a)?),
        Command::Utility(a) => ("utility", utility(&mut ctx, a)?),
        Command::Probe(ProbeCommand::Weak(a)) => ("probe weak", probe_weak(&mut ctx, a)?),
        Command::Probe(ProbeCommand::Nn(a)) => ("probe nn", probe_nn(&mut ctx, a)?),
        Command::Baseline(BaselineCommand::Train(a)) => ("baseline train", baseline_train(&mut ctx, a)?),
        Command::Baseline(BaselineCommand::Predict(a)) => ("baseline predict", baseline_predict(&mut ctx, a)?),
        Command::Report(a) => ("report", Some(report(a, cli.seed)?)),
    };
    if let Some(path) = &cli.manifest_out {
        let body = match run_manifest {
            Some(m) => m.to_json(),
            None => {
                let outputs: BTreeMap<String, String> = ctx
                    .outputs
                    .iter()
                    .map(|p| Ok((p.display().to_string(), hex_sha256(&fs::read(p)?))))
                    .collect::<io::Result<_>>()
                    .map_err(|e| rt("io")(&e))?;
                serde_json::to_string_pretty(&json!({
                    "tool": "confound-audit",
                    "version": VERSION,
                    "command": name,
                    "args": std::env::args().skip(1).collect::<Vec<_>>(),
                    "seed": ctx.seed,
                    "threads": n_threads.unwrap_or_else(rayon::current_num_threads),
                    "outputs": outputs,
                    "wall_time_seconds": started.elapsed().as_secs_f64(),
                }))
                .expect("json value")
            }
        };
        tri!("io", fs::write(path, body));
    }
    Ok(())
}

fn load(input: &CohortIn) -> Result<Cohort, CliError> {
    let mut c = tri!("data", load_cohort(&input.cohort, &ColumnMap::identity()));
    if let Some(f) = &input.features {
        c = tri!("data", load_features(f, &c));
    }
    if let Some(s) = &input.scores {
        let file = tri!("io", File::open(s));
        c = tri!("data", attach_scores_csv(&c, file));
    }
    Ok(c)
}

fn scored(c: &Cohort) -> Result<ScoredLabels, CliError> {
    Ok(tri!("metrics", ScoredLabels::from_cohort(c)))
}

fn synth(ctx: &mut Ctx, a: &SynthArgs, seed: Option<u64>) -> Result<Option<RunManifest>, CliError> {
    let mut cfg = match &a.config {
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SynthConfig>(&s).map_err(|e| CliError::Config(format!("synth config: {e}")))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    ctx.seed = cfg.seed;
    if let Some(n) = a.n_population {
        cfg.n_population = n;
    }
    if let Some(p) = a.prevalence {
        cfg.prevalence = p;
    }
    if let Some(s) = a.signal {
        cfg.signal_strength = s;
    }
    if let Some(b) = a.confounder {
        cfg.confounder_strength = b;
    }
    match a.enrolment {
        Some(EnrolmentArg::SymptomsBased) => cfg.enrolment = Enrolment::symptoms_based_default(),
        Some(EnrolmentArg::Random) => cfg.enrolment = Enrolment::Random { p: a.random_p },
        Some(EnrolmentArg::Matched) => cfg.enrolment = Enrolment::Matched,
        None => {}
    }
    cfg.validate().map_err(|e| CliError::Config(format!("synth: {e}")))?;
    let (population, cohort) = tri!("synth", synth_cohort(&cfg));
    ctx.cohort(&cohort, &a.out, a.features_out.as_deref())?;
    if let Some(t) = &a.truth_out {
        let w = ctx.create(t)?;
        tri!("synth", write_truth(&population, w));
    }
    if let (Some(n), Some(out)) = (a.calibration_size, &a.calibration_out) {
        let cal = tri!("synth", calibration_cohort(&cfg, n, cfg.seed));
        ctx.cohort(&cal, out, a.calibration_features_out.as_deref())?;
    }
    eprintln!(
        "population {}, enrolled {} ({} positive, {} negative)",
        population.len(),
        cohort.len(),
        cohort.n_pos(),
        cohort.n_neg()
    );
    Ok(None)
}

fn match_spec(preset: &str, covariates: Option<&Vec<String>>, no_channel: bool, seed: u64) -> Result<MatchSpec, CliError> {
    let mut spec =
        MatchSpec::preset(preset, seed).ok_or_else(|| CliError::Config(format!("unknown matching preset `{preset}`")))?;
    if let Some(c) = covariates {
        spec = MatchSpec::new(spec.include_channel, c.clone(), seed).map_err(|e| CliError::Config(format!("matching: {e}")))?;
    }
    if no_channel {
        spec.include_channel = false;
    }
    Ok(spec)
}

fn matching(ctx: &mut Ctx, a: &MatchArgs) -> Result<Option<RunManifest>, CliError> {
    let c = load(&a.input)?;
    let spec = match_spec(&a.preset, a.covariates.as_ref(), a.no_channel, ctx.seed)?;
    let (matched, balance) = tri!("matching", match_exact(&c, &spec));
    ctx.cohort(&matched, &a.out, a.features_out.as_deref())?;
    if let Some(p) = &a.balance_out {
        ctx.json(Some(p), &serde_json::to_value(&balance).expect("serialisable"))?;
    }
    eprintln!(
        "kept {} of {} records ({} strata dropped)",
        balance.kept,
        c.len(),
        balance.strata_dropped
    );
    Ok(None)
}

fn resample(ctx: &mut Ctx, a: &ResampleArgs) -> Result<Option<RunManifest>, CliError> {
    let pool = load(&a.input)?;
    let spec = PopulationSpec {
        n_pos: a.n_pos,
        n_neg: a.n_neg,
        p_sym_pos: a.p_sym_pos,
        p_sym_neg: a.p_sym_neg,
        equalize_age: !a.no_equalize_age,
        seed: ctx.seed,
    };
    let (out, report) = tri!("resample", resample_general_population(&pool, &spec));
    ctx.cohort(&out, &a.out, a.features_out.as_deref())?;
    if let Some(p) = &a.report_out {
        ctx.json(Some(p), &serde_json::to_value(&report).expect("serialisable"))?;
    }
    let short = report.cells.iter().filter(|c| c.shortfall).count();
    if short > 0 {
        eprintln!("warning: {short} cells used up their pool");
    }
    Ok(None)
}

fn eval(ctx: &mut Ctx, a: &EvalArgs) -> Result<Option<RunManifest>, CliError> {
    let method: CiMethod = a.ci.parse().map_err(CliError::Config)?;
    let c = load(&a.input)?;
    let d = scored(&c)?;
    let ci = tri!("metrics", auc_ci(&d, method, a.level));
    let roc = tri!("metrics", roc_curve(&d));
    let mut out = json!({
        "n": d.len(),
        "n_pos": d.n_pos(),
        "n_neg": d.n_neg(),
        "auc": ci.estimate,
        "ci": ci,
        "pr_auc": tri!("metrics", pr_auc(&d)),
        "calibration": tri!("metrics", calibration_bins(d.scores(), d.labels(), a.calibration_bins)),
    });
    if let Some(p) = &a.compare_scores {
        let other = tri!("data", attach_scores_csv(&c, tri!("io", File::open(p))));
        let t = tri!("metrics", delong_test(&d, &scored(&other)?));
        out["paired_delong"] = serde_json::to_value(t).expect("serialisable");
    }
    if let Some(preset) = &a.stratify {
        let spec = match_spec(preset, None, false, ctx.seed)?;
        let strata = tri!("metrics", stratified_auc(&c, &spec, a.min_per_class, a.fdr_q));
        out["strata"] = serde_json::to_value(strata).expect("serialisable");
    }
    if let Some(p) = &a.roc_out {
        let fig = tri!("report", emit_figure(FigureKind::RocComparison, &roc_data(&roc, ci)));
        ctx.write(Some(p), &fig.csv)?;
        ctx.write(Some(&p.with_extension("svg")), &fig.svg)?;
    }
    ctx.json(a.out.as_deref(), &out)?;
    Ok(None)
}

fn roc_data(roc: &confound_audit::metrics::RocCurve, ci: confound_audit::metrics::ConfidenceInterval) -> FigureData {
    FigureData::Roc(vec![confound_audit::report::RocSeries {
        label: "model".into(),
        curve: roc.clone(),
        auc: ci.estimate,
        ci: Some(ci),
    }])
}

fn utility(ctx: &mut Ctx, a: &UtilityArgs) -> Result<Option<RunManifest>, CliError> {
    let params = UtilityParams::new(a.r_t, a.epsilon, a.delta).map_err(|e| CliError::Config(format!("utility: {e}")))?;
    if let Some(pi) = a.prevalence {
        let (sens, spec) = (a.sensitivity.expect("clap requires"), a.specificity.expect("clap requires"));
        let u = utility_matrix(&params);
        let eu = tri!("utility", expected_utility(&u, pi, sens, spec));
        ctx.json(
            a.out.as_deref(),
            &json!({ "utility_matrix": u, "prevalence": pi, "sensitivity": sens, "specificity": spec, "expected_utility": eu }),
        )?;
        return Ok(None);
    }
    let Some(cohort) = &a.cohort else {
        return Err(CliError::Config("give either --prevalence/--sensitivity/--specificity or --cohort".into()));
    };
    let c = load(&CohortIn {
        cohort: cohort.clone(),
        features: None,
        scores: a.scores.clone(),
    })?;
    let roc = tri!("metrics", roc_curve(&scored(&c)?));
    let points = tri!("utility", max_eu_curve(&roc, &params, &pi_grid(a.pi_max, a.n_points)));
    let data = FigureData::MaxEu(vec![confound_audit::report::EuSeries {
        label: "model".into(),
        points,
    }]);
    let fig = tri!("report", emit_figure(FigureKind::MaxEuVsPrevalence, &data));
    if let Some(p) = &a.out {
        ctx.write(Some(&p.with_extension("svg")), &fig.svg)?;
    }
    ctx.write(a.out.as_deref(), &fig.csv)?;
    Ok(None)
}

fn probe_weak(ctx: &mut Ctx, a: &WeakArgs) -> Result<Option<RunManifest>, CliError> {
    let c = load(&a.input)?;
    let cal = tri!("data", load_cohort(&a.calibration_cohort, &ColumnMap::identity()));
    let cal = tri!("data", load_features(&a.calibration_features, &cal));
    let cfg = WeakProbeConfig {
        k_max: a.k_max,
        calibration_uar_threshold: a.threshold,
        seed: ctx.seed,
        ..Default::default()
    };
    let res = tri!("probes", weak_robust_curate(&c, &cal, &cfg));
    if let Some(p) = &a.curve_out {
        let fig = tri!("report", emit_figure(FigureKind::WeakRobustCurve, &FigureData::WeakRobust(res.clone())));
        ctx.write(Some(p), &fig.csv)?;
        ctx.write(Some(&p.with_extension("svg")), &fig.svg)?;
    }
    ctx.json(a.out.as_deref(), &serde_json::to_value(&res).expect("serialisable"))?;
    Ok(None)
}

fn probe_nn(ctx: &mut Ctx, a: &NnArgs) -> Result<Option<RunManifest>, CliError> {
    let distance: Distance = a.distance.parse().map_err(CliError::Config)?;
    let c = load(&a.input)?;
    let cfg = WeakProbeConfig {
        seed: ctx.seed,
        distance,
        nn_components: a.components,
        nn_auc_margin: a.auc_margin,
        nn_min_distinct_fraction: a.min_distinct_fraction,
        ..Default::default()
    };
    let res = tri!("probes", nn_substitute(&c, &cfg, Rescore::CopyNeighbourScore));
    ctx.json(a.out.as_deref(), &serde_json::to_value(&res).expect("serialisable"))?;
    Ok(None)
}

fn baseline_train(ctx: &mut Ctx, a: &TrainArgs) -> Result<Option<RunManifest>, CliError> {
    let c = load(&a.input)?;
    let cfg = ForestConfig {
        n_trees: a.n_trees,
        max_features: a.max_features,
        seed: ctx.seed,
    };
    let (train, enc) = match a.kind {
        ModelKind::Symptoms => {
            let enc = tri!("baseline", FeatureEncoding::fit(&c, &SYMPTOM_PREDICTORS, false));
            (c, enc)
        }
        ModelKind::Features => {
            let enc = tri!("baseline", FeatureEncoding::fit(&c, &[], true));
            (c, enc)
        }
        ModelKind::Hybrid => {
            let h = tri!("baseline", hybrid_features(&c));
            let enc = tri!("baseline", hybrid_encoding(&h));
            (h, enc)
        }
    };
    for n in &enc.notes {
        eprintln!("note: {n}");
    }
    let model = tri!("baseline", train_forest(&train, enc, &cfg));
    let body = tri!("baseline", model.to_json());
    ctx.write(Some(&a.model_out), &body)?;
    eprintln!(
        "trained {} trees; OOB accuracy {:?}, OOB AUC {:?}",
        model.trees.len(),
        model.oob_score,
        model.oob_auc
    );
    Ok(None)
}

fn baseline_predict(ctx: &mut Ctx, a: &PredictArgs) -> Result<Option<RunManifest>, CliError> {
    let body = tri!("io", fs::read_to_string(&a.model));
    let model = tri!("baseline", TreeEnsemble::from_json(&body));
    let mut c = load(&a.input)?;
    let uses_audio = model
        .encoding
        .columns
        .iter()
        .any(|col| matches!(col, Column::Numeric { name } if name == AUDIO_SCORE));
    if uses_audio {
        c = tri!("baseline", hybrid_features(&c));
    }
    let p = tri!("baseline", predict_proba(&model, &c));
    let mut s = String::from("id,score\n");
    for (r, v) in c.iter().zip(&p) {
        s.push_str(&format!("{},{v}\n", r.id));
    }
    ctx.write(a.out.as_deref(), &s)?;
    Ok(None)
}

fn report(a: &ReportArgs, seed: Option<u64>) -> Result<RunManifest, CliError> {
    let mut cfg = match (&a.config, &a.from_manifest) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(m)) => RunManifest::load(m)?.config,
        (None, None) => unreachable!("clap requires one"),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let bundle = run_pipeline(&cfg)?;
    bundle.write_to(&a.out_dir)?;
    for n in &bundle.manifest.notes {
        eprintln!("note: {n}");
    }
    eprintln!(
        "wrote {} figures and {} tables to {}",
        bundle.figures.len(),
        bundle.tables.len(),
        a.out_dir.display()
    );
    Ok(bundle.manifest)
}
