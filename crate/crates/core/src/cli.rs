//! The `fairface` command line. [`run`] parses arguments, executes one
//! subcommand inside a sized thread pool, and returns the exit code:
//! 0 on success, 2 when some records failed but outputs were written,
//! 1 on data errors, 64 on usage errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::annotator::{self, AnnotatorError, Task};
use crate::config::{Config, ConfigError};
use crate::features::{read_features, FeatureError, FeatureMatrix};
use crate::manifest::{
    self, group_index, load_manifest, write_manifest, Age, Attribute, Gender, GroupingSpec, Manifest,
    ManifestError, SamplingSpec, StrataField,
};
use crate::metrics::{self, load_predictions, FairnessReport, MetricsError, ThresholdMode};
use crate::perturb::{
    self, apply_suite, robustness_ratio, score_images, PerturbError, RobustnessReport, Transform,
    TransformOutcome,
};
use crate::report::{self, file_digest, Format, ReportError};
use crate::skintone::{self, SkinToneError, TonePalette};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("skin tone: {0}")]
    SkinTone(#[from] SkinToneError),
    #[error("annotator: {0}")]
    Annotator(#[from] AnnotatorError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("perturb: {0}")]
    Perturb(#[from] PerturbError),
    #[error("report: {0}")]
    Report(#[from] ReportError),
    #[error("{0}")]
    Data(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairface", version, about = "Fairness benchmark toolkit for AI-generated face detection")]
struct Cli {
    /// TOML config file. Unknown keys are rejected; see the defaults below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed. Precedence: this flag, then FAIRFACE_SEED, then the
    /// config's `seed` [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads [default: all cores]. With 1 every output is
    /// bit-for-bit reproducible; outputs are also identical across counts.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a manifest (and optionally features and predictions) and print a summary.
    Validate(ValidateArgs),
    /// Assign a stratified train/test split and write the manifest.
    Split(SplitArgs),
    /// Subsample per subset (--fraction) or re-draw at a real:fake ratio (--ratio, --total).
    Sample(SampleArgs),
    /// Estimate Monk skin tones from images and landmark or mask files.
    AnnotateSkintone(SkinToneArgs),
    /// Train a gender or age annotator on a feature file.
    TrainAnnotator(TrainArgs),
    /// Fill gender or age columns with an annotator's predictions.
    Annotate(AnnotateArgs),
    /// Compute utility and fairness metrics and write a run directory.
    Evaluate(EvaluateArgs),
    /// Write perturbed copies of every image plus a matching manifest.
    Perturb(PerturbArgs),
    /// Perturb, score, and evaluate; report after/before metric ratios.
    Robustness(RobustnessArgs),
    /// Render a stored report as json, markdown, or table-text, or emit plot series.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output manifest with the `split` column filled.
    #[arg(long)]
    out: PathBuf,
    /// Test share of every stratum [default: 0.2].
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Comma-separated strata: subset, category, or a grouping name [default: subset].
    #[arg(long, value_delimiter = ',')]
    strata: Vec<String>,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["fraction", "ratio"])))]
struct SampleArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Keep this share of every subset.
    #[arg(long)]
    fraction: Option<f64>,
    /// Real:fake ratio such as 1:1; needs --total.
    #[arg(long, requires = "total")]
    ratio: Option<String>,
    #[arg(long)]
    total: Option<usize>,
}

#[derive(Debug, Args)]
struct SkinToneArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Image root; `image_path` is relative to it [default: the manifest's directory].
    #[arg(long)]
    images: Option<PathBuf>,
    /// Directory of `<sample_id>.json` landmark files or `<sample_id>.png` masks.
    #[arg(long)]
    regions: Option<PathBuf>,
    /// Palette TOML [default: the bundled Monk palette].
    #[arg(long)]
    palette: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Number of colour clusters [default: 3].
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Sensitive attribute for the fairness term, or `none` [default: skintone].
    #[arg(long)]
    fair_attr: Option<String>,
    /// Output model file (FAM1).
    #[arg(long)]
    out: PathBuf,
    /// [default: 32]
    #[arg(long)]
    epochs: Option<usize>,
    /// Fairness weight [default: 1.0].
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replace existing labels instead of only filling missing ones.
    #[arg(long)]
    overwrite: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Fixed,
    Eer,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// CSV with `sample_id,score` columns.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// FFB1 representations for individual fairness.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Runs root; the run lands in `<out>/<run_id>/`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Decision threshold [default: 0.5].
    #[arg(long)]
    threshold: Option<f64>,
    /// [default: fixed]
    #[arg(long, value_enum)]
    threshold_mode: Option<ModeArg>,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    /// identity, jpeg, blur, hsv, brightness_contrast, random_crop, or rotation.
    #[arg(long)]
    transform: String,
    /// Output directory for images and `manifest.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RobustnessArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Transform to run (repeatable, or `all`) [default: config list, else all six].
    #[arg(long)]
    transform: Vec<String>,
    /// Runs root; the run lands in `<out>/<run_id>/`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
    TableText,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlotArg {
    Radar,
    Bars,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// A `report.json` from `evaluate` or `robustness`.
    #[arg(long)]
    input: PathBuf,
    /// [default: markdown]
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Emit plot series as JSON instead of a rendering.
    #[arg(long, value_enum, conflicts_with = "format")]
    plot: Option<PlotArg>,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

/// Result of a subcommand: lines for stdout and per-record problems.
#[derive(Debug, Default)]
struct Outcome {
    summary: Vec<String>,
    partial: Vec<String>,
}

impl Outcome {
    fn line(&mut self, s: impl Into<String>) {
        self.summary.push(s.into());
    }
}

fn defaults_help() -> String {
    let text = toml::to_string(&Config::default()).unwrap_or_default();
    format!("Config file defaults (TOML). Only the top-level seed may be set:\n\n{text}")
}

/// Parses `args` (including the program name), runs the subcommand, and
/// returns the exit code. Summaries go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cmd = Cli::command().after_long_help(defaults_help());
    let cli = match cmd.try_get_matches_from(args).and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(out) => {
            for l in &out.summary {
                println!("{l}");
            }
            for p in &out.partial {
                eprintln!("warning: {p}");
            }
            if out.partial.is_empty() {
                EXIT_OK
            } else {
                EXIT_PARTIAL
            }
        }
        Err(e) => {
            eprintln!("fairface: error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply_env()?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    pool.install(|| dispatch(cli.command, &cfg))
}

fn dispatch(cmd: Command, cfg: &Config) -> Result<Outcome, CliError> {
    match cmd {
        Command::Validate(a) => validate(a, cfg),
        Command::Split(a) => split(a, cfg),
        Command::Sample(a) => sample(a, cfg),
        Command::AnnotateSkintone(a) => annotate_skintone(a, cfg),
        Command::TrainAnnotator(a) => train_annotator(a, cfg),
        Command::Annotate(a) => annotate(a, cfg),
        Command::Evaluate(a) => evaluate(a, cfg),
        Command::Perturb(a) => perturb(a, cfg),
        Command::Robustness(a) => robustness(a, cfg),
        Command::Report(a) => report_cmd(a),
    }
}

fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set paths.{name} in the config)")))
}

fn image_root(flag: Option<PathBuf>, cfg: &Config, manifest: &Path) -> PathBuf {
    flag.or_else(|| cfg.paths.images.clone())
        .unwrap_or_else(|| manifest.parent().map(Path::to_path_buf).unwrap_or_default())
}

fn write_parent(path: &Path) -> Result<(), CliError> {
    if let Some(d) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d)?;
    }
    Ok(())
}

fn save_manifest(m: &Manifest, path: &Path) -> Result<(), CliError> {
    write_parent(path)?;
    write_manifest(m, path)?;
    Ok(())
}

fn validate(a: ValidateArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let path = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let m = load_manifest(&path)?;
    m.validate()?;
    let mut out = Outcome::default();
    let fakes = m.records.iter().filter(|r| r.target == 1).count();
    out.line(format!("{}: {} records ({} real, {fakes} fake)", path.display(), m.len(), m.len() - fakes));
    let mut subsets: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &m.records {
        *subsets.entry(r.subset.as_str()).or_default() += 1;
    }
    for (s, n) in subsets {
        out.line(format!("  subset {s}: {n}"));
    }
    let count = |f: &dyn Fn(&manifest::SampleRecord) -> bool| m.records.iter().filter(|r| f(r)).count();
    out.line(format!(
        "  annotated: skin_tone {}, gender {}, age {}",
        count(&|r| r.skin_tone.is_some()),
        count(&|r| r.gender.is_some()),
        count(&|r| r.age.is_some())
    ));
    if let Some(fp) = a.features.or_else(|| cfg.paths.features.clone()) {
        let fm = read_features(&fp)?;
        let index = fm.index();
        let missing = m.records.iter().filter(|r| !index.contains_key(r.sample_id.as_str())).count();
        out.line(format!("  features: {} rows x {} dims, {missing} manifest records without a row", fm.n(), fm.d));
    }
    if let Some(pp) = a.predictions.or_else(|| cfg.paths.predictions.clone()) {
        let preds = load_predictions(&pp)?;
        metrics::join_predictions(&preds, &m, cfg.evaluate.threshold)?;
        out.line(format!("  predictions: {} scores, all ids known", preds.len()));
    }
    Ok(out)
}

fn split(a: SplitArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let path = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let m = load_manifest(&path)?;
    let names = if a.strata.is_empty() { cfg.split.strata.clone() } else { a.strata };
    let strata = names
        .iter()
        .map(|s| s.parse::<StrataField>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    let fraction = a.test_fraction.unwrap_or(cfg.split.test_fraction);
    let assigned = manifest::assign_split(&m, fraction, &strata, cfg.seed)?;
    save_manifest(&assigned, &a.out)?;
    let test = assigned.records.iter().filter(|r| r.split == manifest::Split::Test).count();
    let mut out = Outcome::default();
    out.line(format!("train {}, test {test} -> {}", assigned.len() - test, a.out.display()));
    Ok(out)
}

fn parse_ratio(s: &str) -> Result<(u32, u32), CliError> {
    let bad = || CliError::Usage(format!("--ratio `{s}` must look like 1:1"));
    let (r, f) = s.split_once(':').ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, f.trim().parse().map_err(|_| bad())?))
}

fn sample(a: SampleArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let path = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let m = load_manifest(&path)?;
    let drawn = match (a.fraction, a.ratio) {
        (Some(fraction), _) => manifest::subsample(&m, &SamplingSpec::Fraction { fraction, seed: cfg.seed })?,
        (None, Some(r)) => {
            let (real, fake) = parse_ratio(&r)?;
            let total = a.total.ok_or_else(|| CliError::Usage("--ratio needs --total".into()))?;
            manifest::rebalance(&m, &SamplingSpec::Ratio { real, fake, total, seed: cfg.seed })?
        }
        (None, None) => return Err(CliError::Usage("pass --fraction or --ratio".into())),
    };
    save_manifest(&drawn, &a.out)?;
    let mut out = Outcome::default();
    out.line(format!("kept {} of {} records -> {}", drawn.len(), m.len(), a.out.display()));
    Ok(out)
}

fn annotate_skintone(a: SkinToneArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let path = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let regions = pick(a.regions, &cfg.paths.regions, "regions")?;
    let m = load_manifest(&path)?;
    let images = image_root(a.images, cfg, &path);
    let palette = match a.palette.or_else(|| cfg.paths.palette.clone()) {
        Some(p) => TonePalette::load(&p)?,
        None => TonePalette::monk(),
    };
    let mut km = cfg.skintone;
    if let Some(k) = a.k {
        km.k = k;
    }
    let res = skintone::annotate_manifest(&m, &images, &regions, &palette, &km, cfg.seed);
    save_manifest(&res.manifest, &a.out)?;
    let mut hist = [0usize; 10];
    for (_, e) in &res.estimates {
        hist[e.tone as usize - 1] += 1;
    }
    let mut out = Outcome::default();
    out.line(format!("{} tones estimated -> {}", res.estimates.len(), a.out.display()));
    out.line(format!("  histogram (tone 1..10): {hist:?}"));
    out.partial = res.failures.iter().map(|(id, e)| format!("{id}: {e}")).collect();
    Ok(out)
}

/// Feature rows for the manifest records that have one, in manifest order.
fn aligned_rows<'a>(m: &'a Manifest, fm: &FeatureMatrix) -> Vec<(&'a manifest::SampleRecord, usize)> {
    let index = fm.index();
    m.records
        .iter()
        .filter_map(|r| index.get(r.sample_id.as_str()).map(|&i| (r, i)))
        .collect()
}

fn task_label(r: &manifest::SampleRecord, task: Task) -> Option<usize> {
    match task {
        Task::Gender => r.gender.map(Gender::index),
        Task::Age => r.age.map(Age::index),
    }
}

fn train_annotator(a: TrainArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let mpath = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let fpath = pick(a.features, &cfg.paths.features, "features")?;
    let m = load_manifest(&mpath)?;
    let fm = read_features(&fpath)?;
    let fair = a.fair_attr.unwrap_or_else(|| cfg.annotator.fair_attribute.clone());
    let spec = if fair.eq_ignore_ascii_case("none") {
        None
    } else {
        Some(GroupingSpec {
            attribute: fair.parse::<Attribute>().map_err(CliError::Usage)?,
            buckets: cfg.evaluate.buckets,
        })
    };
    let rows: Vec<(usize, usize, usize)> = aligned_rows(&m, &fm)
        .into_iter()
        .filter_map(|(r, i)| {
            let label = task_label(r, a.task)?;
            // records without the sensitive attribute form their own group
            let attr = spec.map_or(0, |s| group_index(r, &s).unwrap_or(s.groups().len()));
            Some((i, label, attr))
        })
        .collect();
    if rows.is_empty() {
        return Err(CliError::Data("no manifest record has both a feature row and a label".into()));
    }
    let x = ndarray::Array2::from_shape_fn((rows.len(), fm.d), |(k, j)| fm.row(rows[k].0)[j] as f64);
    let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let attrs: Vec<usize> = if spec.is_some() { rows.iter().map(|r| r.2).collect() } else { Vec::new() };
    let mut tc = cfg.annotator.train.clone();
    tc.seed = cfg.seed;
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    if let Some(l) = a.lambda {
        tc.lambda = l;
    }
    let model = annotator::train(x.view(), &labels, &attrs, a.task.vocab(), &tc)?;
    write_parent(&a.out)?;
    annotator::save_model(&model, &a.out)?;
    let mut out = Outcome::default();
    out.line(format!(
        "trained on {} rows ({} skipped without label or features), final loss {} -> {}",
        rows.len(),
        m.len() - rows.len(),
        model.loss_trace.last().map_or("n/a".to_string(), |l| report::format_g6(*l)),
        a.out.display()
    ));
    Ok(out)
}

fn annotate(a: AnnotateArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let mpath = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let fpath = pick(a.features, &cfg.paths.features, "features")?;
    let mut m = load_manifest(&mpath)?;
    let fm = read_features(&fpath)?;
    let model = annotator::load_model(&a.model)?;
    let task = [Task::Gender, Task::Age]
        .into_iter()
        .find(|t| t.vocab() == model.vocab)
        .ok_or_else(|| CliError::Data(format!("model vocabulary {:?} is neither gender nor age", model.vocab)))?;
    let preds = annotator::predict(&model, &fm)?;
    let index = fm.index();
    let mut out = Outcome::default();
    let mut written = 0;
    for r in &mut m.records {
        let Some(&i) = index.get(r.sample_id.as_str()) else {
            out.partial.push(format!("{}: no feature row", r.sample_id));
            continue;
        };
        let class = preds[i].class;
        match task {
            Task::Gender if a.overwrite || r.gender.is_none() => {
                r.gender = Some(Gender::ALL[class]);
                written += 1;
            }
            Task::Age if a.overwrite || r.age.is_none() => {
                r.age = Some(Age::ALL[class]);
                written += 1;
            }
            _ => {}
        }
    }
    save_manifest(&m, &a.out)?;
    out.line(format!("{written} {task:?} labels written -> {}", a.out.display()));
    Ok(out)
}

fn digests(inputs: &[(&str, &Path)]) -> Result<BTreeMap<String, String>, CliError> {
    inputs
        .iter()
        .map(|(k, p)| Ok((k.to_string(), file_digest(p)?)))
        .collect()
}

fn evaluate(a: EvaluateArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let mpath = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let ppath = pick(a.predictions, &cfg.paths.predictions, "predictions")?;
    let root = pick(a.out, &cfg.paths.out, "out")?;
    let fpath = a.features.or_else(|| cfg.paths.features.clone());
    let m = load_manifest(&mpath)?;
    let preds = load_predictions(&ppath)?;
    let fm = fpath.as_ref().map(read_features).transpose()?;
    let mut ec = cfg.evaluate.clone();
    ec.individual.seed = cfg.seed;
    if let Some(t) = a.threshold {
        ec.threshold = t;
    }
    if let Some(mode) = a.threshold_mode {
        ec.threshold_mode = match mode {
            ModeArg::Fixed => ThresholdMode::Fixed,
            ModeArg::Eer => ThresholdMode::Eer,
        };
    }
    let rep = metrics::evaluate(&preds, &m, fm.as_ref(), &ec)?;
    let mut inputs = vec![("manifest", mpath.as_path()), ("predictions", ppath.as_path())];
    if let Some(f) = &fpath {
        inputs.push(("features", f.as_path()));
    }
    let config = json!({"command": "evaluate", "seed": cfg.seed, "evaluate": ec});
    let dir = report::write_run(&root, &config, digests(&inputs)?, &rep)?;
    let mut out = Outcome::default();
    out.line(format!("run written to {}", dir.display()));
    out.extend_headline(&rep);
    Ok(out)
}

impl Outcome {
    fn extend_headline(&mut self, rep: &FairnessReport) {
        let u = &rep.overall.utility;
        self.line(format!(
            "  n {}  AUC {}  ACC {}  EER {}  threshold {}",
            rep.overall.n,
            report::pct(u.auc),
            report::pct(u.acc),
            report::pct(u.eer),
            report::format_g6(rep.threshold)
        ));
        for (attr, f) in &rep.overall.fairness {
            self.line(format!(
                "  {attr}: F_MEO {}  F_DP {}  F_OAE {}  F_EO {}",
                report::pct(f.f_meo),
                report::pct(f.f_dp),
                report::pct(f.f_oae),
                report::pct(f.f_eo)
            ));
        }
        if !rep.warnings.is_empty() {
            self.line(format!("  {} metric notes recorded in the report", rep.warnings.len()));
        }
    }
}

fn transform_by_name(name: &str) -> Result<Transform, CliError> {
    Transform::by_name(name).ok_or_else(|| CliError::Usage(format!("unknown transform `{name}`")))
}

fn perturb(a: PerturbArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let mpath = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let m = load_manifest(&mpath)?;
    let images = image_root(a.images, cfg, &mpath);
    let t = transform_by_name(&a.transform)?;
    let res = apply_suite(&m, &images, &t, cfg.seed, &a.out)?;
    let mpath_out = a.out.join("manifest.csv");
    save_manifest(&res.manifest, &mpath_out)?;
    let mut out = Outcome::default();
    out.line(format!("{} images -> {}", res.manifest.len(), a.out.display()));
    out.partial = res.errors.iter().map(|(id, e)| format!("{id}: {e}")).collect();
    Ok(out)
}

fn robustness(a: RobustnessArgs, cfg: &Config) -> Result<Outcome, CliError> {
    let mpath = pick(a.manifest, &cfg.paths.manifest, "manifest")?;
    let root = pick(a.out, &cfg.paths.out, "out")?;
    let fpath = a.features.or_else(|| cfg.paths.features.clone());
    let images = image_root(a.images, cfg, &mpath);
    let m = load_manifest(&mpath)?;
    let fm = fpath.as_ref().map(read_features).transpose()?;

    let mut transforms = vec![Transform::Identity];
    let requested: Vec<Transform> = if a.transform.iter().any(|t| t == "all") {
        Transform::suite()
    } else if !a.transform.is_empty() {
        a.transform.iter().map(|n| transform_by_name(n)).collect::<Result<_, _>>()?
    } else if !cfg.robustness.transforms.is_empty() {
        cfg.robustness.transforms.clone()
    } else {
        Transform::suite()
    };
    for t in requested {
        t.validate()?;
        if transforms.iter().all(|x| x.name() != t.name()) {
            transforms.push(t);
        }
    }

    let mut ec = cfg.evaluate.clone();
    ec.individual.seed = cfg.seed;
    let config = json!({
        "command": "robustness",
        "seed": cfg.seed,
        "evaluate": ec,
        "scorer": cfg.robustness.scorer,
        "transforms": transforms,
    });
    let mut inputs = vec![("manifest", mpath.as_path())];
    if let Some(f) = &fpath {
        inputs.push(("features", f.as_path()));
    }
    let inputs = digests(&inputs)?;
    let work = root.join(report::run_id(&config, &inputs)).join("perturbed");
    let scorer = &cfg.robustness.scorer;

    let mut out = Outcome::default();
    let (base_preds, base_err) = score_images(&m, &images, scorer);
    out.partial.extend(base_err.iter().map(|(id, e)| format!("baseline {id}: {e}")));
    let baseline = metrics::evaluate(&base_preds, &m, fm.as_ref(), &ec)?;

    let mut results = BTreeMap::new();
    for t in &transforms {
        let dir = work.join(t.name());
        let suite = apply_suite(&m, &images, t, cfg.seed, &dir)?;
        let (preds, errs) = score_images(&suite.manifest, &dir, scorer);
        let mut failures = suite.errors;
        failures.extend(errs);
        out.partial.extend(failures.iter().map(|(id, e)| format!("{} {id}: {e}", t.name())));
        let rep = metrics::evaluate(&preds, &m, fm.as_ref(), &ec)?;
        let ratios = robustness_ratio(&rep, &baseline)?;
        results.insert(
            t.name().to_string(),
            TransformOutcome {
                transform: *t,
                report: rep,
                ratios,
                failures,
            },
        );
    }
    let doc = RobustnessReport {
        baseline,
        transforms: results,
    };
    let md = report::ratio_markdown(&doc.ratio_rows());
    let dir = report::write_run_files(&root, &config, inputs, &report::to_canonical_json(&doc)?, &[("ratios.md", md)])?;
    out.line(format!("run written to {}", dir.display()));
    for (name, t) in &doc.transforms {
        let get = |k: &str| t.ratios.get(k).copied().flatten().map_or("n/a".to_string(), |v| format!("{v:.3}"));
        out.line(format!(
            "  {name:<20} AUC x{}  ACC x{}  Intersection F_EO x{}",
            get("utility.auc"),
            get("utility.acc"),
            get("fairness.Intersection.f_eo")
        ));
    }
    Ok(out)
}

fn report_cmd(a: ReportArgs) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(&a.input)?;
    let format = match a.format.unwrap_or(FormatArg::Markdown) {
        FormatArg::Json => Format::Json,
        FormatArg::Markdown => Format::Markdown,
        FormatArg::TableText => Format::TableText,
    };
    let rendered = match serde_json::from_str::<FairnessReport>(&text) {
        Ok(rep) => match a.plot {
            Some(PlotArg::Radar) => report::to_canonical_json(&report::radar_data(&rep)?)?,
            Some(PlotArg::Bars) => report::to_canonical_json(&report::subgroup_bars(&rep)?)?,
            None => report::render(&rep, format),
        },
        Err(_) => {
            let doc: perturb::RobustnessReport = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{} is not a report: {e}", a.input.display())))?;
            if a.plot.is_some() {
                return Err(CliError::Usage("plots need an evaluate report".into()));
            }
            let rows = doc.ratio_rows();
            match format {
                Format::Json => report::to_canonical_json(&rows)?,
                Format::Markdown => report::ratio_markdown(&rows),
                Format::TableText => {
                    let mut s = String::from("transform\tmetric\tratio\n");
                    for (t, table) in &rows {
                        for (k, v) in table {
                            let v = v.map_or("NA".to_string(), report::format_g6);
                            s.push_str(&format!("{t}\t{k}\t{v}\n"));
                        }
                    }
                    s
                }
            }
        }
    };
    let mut out = Outcome::default();
    match a.out {
        Some(p) => {
            write_parent(&p)?;
            std::fs::write(&p, rendered)?;
            out.line(format!("written to {}", p.display()));
        }
        None => out.line(rendered.trim_end_matches('\n')),
    }
    Ok(out)
}
