mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const THREADS_ENV: &str = "CONFOUND_AUDIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "confound-audit", version, about = "Confounder-aware evaluation of binary screening classifiers")]
pub struct Cli {
    /// Seed for every randomised step (overrides seeds in config files).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; CONFOUND_AUDIT_THREADS takes precedence.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Write a JSON run manifest here.
    #[arg(long, global = true)]
    pub manifest_out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic population and enrol a cohort from it.
    Synth(SynthArgs),
    /// Exact stratified matching of a cohort.
    Match(MatchArgs),
    /// Build a general-population test set from a pool.
    Resample(ResampleArgs),
    /// AUC with confidence interval, PR-AUC, calibration and per-stratum AUC.
    Eval(EvalArgs),
    /// Expected utility of one operating point, or a max-EU curve for a scored cohort.
    Utility(UtilityArgs),
    /// Confounder probes.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Symptoms / feature / hybrid random-forest baselines.
    #[command(subcommand)]
    Baseline(BaselineCommand),
    /// Run a full pipeline and write figures, tables and a manifest.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CohortIn {
    /// Participant CSV.
    #[arg(long)]
    pub cohort: PathBuf,
    /// Feature sidecar (`id,f0,…`).
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Score table (`id,score`).
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnrolmentArg {
    SymptomsBased,
    Random,
    Matched,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generator config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_population: Option<usize>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    /// Shift of positives along the signal coordinate.
    #[arg(long)]
    pub signal: Option<f64>,
    /// Scale of the covariate embedding in feature space.
    #[arg(long)]
    pub confounder: Option<f64>,
    #[arg(long, value_enum)]
    pub enrolment: Option<EnrolmentArg>,
    /// Enrolment probability for `--enrolment random`.
    #[arg(long, default_value_t = 0.1)]
    pub random_p: f64,
    /// Enrolled cohort CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Ground truth for the whole population.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
    /// Also write a labelled calibration cohort of this size.
    #[arg(long, requires = "calibration_out")]
    pub calibration_size: Option<usize>,
    #[arg(long, requires = "calibration_features_out")]
    pub calibration_out: Option<PathBuf>,
    #[arg(long)]
    pub calibration_features_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    #[command(flatten)]
    pub input: CohortIn,
    /// Covariate preset: `test` or `train`.
    #[arg(long, default_value = "test")]
    pub preset: String,
    /// Comma-separated boolean covariates replacing the preset's.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Leave recruitment channel out of the stratum key.
    #[arg(long)]
    pub no_channel: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Per-stratum balance report (JSON).
    #[arg(long)]
    pub balance_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ResampleArgs {
    #[command(flatten)]
    pub input: CohortIn,
    #[arg(long)]
    pub n_pos: usize,
    #[arg(long)]
    pub n_neg: usize,
    #[arg(long, default_value_t = 0.65)]
    pub p_sym_pos: f64,
    #[arg(long)]
    pub p_sym_neg: f64,
    #[arg(long)]
    pub no_equalize_age: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub features_out: Option<PathBuf>,
    /// Per-cell counts (JSON).
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: CohortIn,
    /// `delong` or `hanley-mcneil`.
    #[arg(long, default_value = "delong")]
    pub ci: String,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Second score table for a paired DeLong comparison.
    #[arg(long)]
    pub compare_scores: Option<PathBuf>,
    /// ROC operating points (CSV).
    #[arg(long)]
    pub roc_out: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub calibration_bins: usize,
    /// Per-stratum AUC using this matching preset.
    #[arg(long)]
    pub stratify: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub min_per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    pub fdr_q: f64,
    /// Summary JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct UtilityArgs {
    #[arg(long, default_value_t = 1.5)]
    pub r_t: f64,
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, requires_all = ["sensitivity", "specificity"], conflicts_with = "cohort")]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub sensitivity: Option<f64>,
    #[arg(long)]
    pub specificity: Option<f64>,
    /// Scored cohort for a max-EU curve.
    #[arg(long)]
    pub cohort: Option<PathBuf>,
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub pi_max: f64,
    #[arg(long, default_value_t = 101)]
    pub n_points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ProbeCommand {
    /// Weak-Robust curation over PCA subspaces of the negatives.
    Weak(WeakArgs),
    /// Nearest-negative-neighbour substitution.
    Nn(NnArgs),
}

#[derive(Debug, Args)]
pub struct WeakArgs {
    #[command(flatten)]
    pub input: CohortIn,
    #[arg(long)]
    pub calibration_cohort: PathBuf,
    #[arg(long)]
    pub calibration_features: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    #[arg(long, default_value_t = 0.8)]
    pub threshold: f64,
    /// Result JSON; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Curve CSV plus SVG written next to it.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NnArgs {
    #[command(flatten)]
    pub input: CohortIn,
    #[arg(long, default_value = "euclidean")]
    pub distance: String,
    /// Search in this many principal components of the negatives.
    #[arg(long)]
    pub components: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pub auc_margin: f64,
    #[arg(long, default_value_t = 0.1)]
    pub min_distinct_fraction: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelKind {
    Symptoms,
    Features,
    Hybrid,
}

#[derive(Debug, Subcommand)]
pub enum BaselineCommand {
    Train(TrainArgs),
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: CohortIn,
    #[arg(long, value_enum, default_value = "symptoms")]
    pub kind: ModelKind,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub model_out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub input: CohortIn,
    #[arg(long)]
    pub model: PathBuf,
    /// `id,score` CSV; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Pipeline config (JSON).
    #[arg(long, conflicts_with = "from_manifest", required_unless_present = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Rerun the config recorded in a manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
