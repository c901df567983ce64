//! The `death-forecast` command line: one subcommand per pipeline stage.
//!
//! Option precedence is flag, then `DEATH_FORECAST_*` environment variable,
//! then the `--config` file, then the built-in default. Failures print one
//! line `error<TAB>kind<TAB>code<TAB>message` on stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::dataset::{
    build_dataset, DatasetConfig, DatasetError, DatasetManifest, MatchSource, MatchStore, Split,
    DEFAULT_PERIOD_TICKS, DEFAULT_WINDOW_SECONDS, STORE_INDEX,
};
use crate::eval::{
    classify_mispredictions, health_correlation, pooled, score_match, score_matches,
    time_to_death_distribution, EvalError, EvalReport, MispredictionCounts, PredictionTimeline,
    DEFAULT_HORIZON_SECONDS, DEFAULT_THRESHOLD,
};
use crate::features::{FeatureError, FeatureSchema, SchemaVariant};
use crate::match_data::{read_match_file, write_match_file, MatchError};
use crate::model::{load_checkpoint, load_checkpoint_for, ModelConfig, ModelError};
use crate::synth::{write_corpus, SynthConfig, SynthError};
use crate::train::{random_search, train, SearchSpace, TrainError, TrainRunConfig};

pub const ENV_PREFIX: &str = "DEATH_FORECAST_";

pub const REPORT_FILE: &str = "report.tsv";
pub const PR_TABLE_FILE: &str = "pr_curve.tsv";
pub const TIME_TO_DEATH_FILE: &str = "time_to_death.tsv";

/// Seconds after the label window within which an alarm counts as early rather than false.
pub const NEAR_WINDOW_SECONDS: f64 = 20.0;

#[derive(Debug, Parser)]
#[command(name = "death-forecast", version, about = "Hero death forecasting pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// TOML key-value file; keys are flag names with underscores.
    #[arg(long, global = true, env = "DEATH_FORECAST_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "DEATH_FORECAST_SCHEMA")]
    pub schema: Option<SchemaVariant>,
    #[arg(long, global = true, env = "DEATH_FORECAST_WINDOW_SECONDS")]
    pub window_seconds: Option<f64>,
    #[arg(long, global = true, env = "DEATH_FORECAST_PERIOD_TICKS")]
    pub period_ticks: Option<u64>,
    #[arg(long, global = true, env = "DEATH_FORECAST_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; 1 gives bit-identical reruns.
    #[arg(long, global = true, env = "DEATH_FORECAST_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, env = "DEATH_FORECAST_THRESHOLD")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic match files with a known death hazard.
    Synth(SynthArgs),
    /// Validate match files and copy them into a store.
    Ingest(IngestArgs),
    /// Split, extract, normalize and shard a store.
    Extract(ExtractArgs),
    /// Train a model on an extracted dataset.
    Train(TrainArgs),
    /// Random hyperparameter search.
    Search(SearchArgs),
    /// Evaluate a checkpoint on held-out matches.
    Eval(EvalArgs),
    /// Write the per-hero probability timeline of one match.
    Predict(PredictArgs),
    /// List the per-hero feature order of a schema.
    #[command(name = "schema-dump", alias = "schema_dump")]
    SchemaDump(SchemaDumpArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "DEATH_FORECAST_MATCHES")]
    pub matches: Option<usize>,
    #[arg(long, env = "DEATH_FORECAST_FRAMES")]
    pub frames: Option<usize>,
    /// TOML generator config; defaults to the built-in one.
    #[arg(long)]
    pub synth_config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Drop invalid files with a warning instead of failing.
    #[arg(long)]
    pub skip_invalid: bool,
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "DEATH_FORECAST_DROP_FRACTION")]
    pub drop_fraction: Option<f64>,
    #[arg(long, env = "DEATH_FORECAST_SHARD_CAPACITY")]
    pub shard_capacity: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "DEATH_FORECAST_MAX_STEPS")]
    pub max_steps: Option<u64>,
    #[arg(long, env = "DEATH_FORECAST_VALIDATION_INTERVAL")]
    pub validation_interval: Option<u64>,
    #[arg(long, env = "DEATH_FORECAST_LEARNING_RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long, env = "DEATH_FORECAST_BATCH_SIZE")]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, env = "DEATH_FORECAST_BUDGET")]
    pub budget: Option<usize>,
    #[arg(long, env = "DEATH_FORECAST_STEPS_PER_TRIAL")]
    pub steps_per_trial: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Match ids to evaluate; defaults to the test split.
    #[arg(long = "match")]
    pub matches: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long = "match")]
    pub match_file: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SchemaDumpArgs {
    /// minimal, medium or full; falls back to --schema.
    pub variant: Option<SchemaVariant>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    InsufficientPositives(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::InsufficientPositives(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::InsufficientPositives(_) => "insufficient_positives",
            CliError::Io(_) => "io",
        }
    }

    /// `error<TAB>kind<TAB>code<TAB>message`, message on one line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\t'], " ");
        format!("error\t{}\t{}\t{msg}", self.kind(), self.exit_code())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<MatchError> for CliError {
    fn from(e: MatchError) -> Self {
        match e {
            MatchError::Io(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::Io(e) => e.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(e) => e.into(),
            DatasetError::Match(e) => e.into(),
            DatasetError::Feature(e) => e.into(),
            DatasetError::InsufficientPositives(_) => CliError::InsufficientPositives(e.to_string()),
            DatasetError::NonPositiveWindow(_) | DatasetError::InvalidDropFraction(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io(e) => e.into(),
            ModelError::InvalidArchitecture(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io(e) => e.into(),
            EvalError::Model(e) => e.into(),
            EvalError::Dataset(e) => e.into(),
            EvalError::Feature(e) => e.into(),
            EvalError::NoPositives => CliError::InsufficientPositives(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io(e) => e.into(),
            TrainError::Dataset(e) => e.into(),
            TrainError::Model(e) => e.into(),
            TrainError::Eval(e) => e.into(),
            TrainError::InsufficientPositives(_) => CliError::InsufficientPositives(e.to_string()),
            TrainError::InvalidSpace(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Io(e) => e.into(),
            SynthError::Match(e) => e.into(),
            SynthError::Eval(e) => e.into(),
            SynthError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Values from the `--config` file.
#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(ConfigFile { table })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.table
            .get(key)
            .map(|v| {
                v.clone()
                    .try_into()
                    .map_err(|e| CliError::Usage(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    /// `flag` if given, else the file's `key`, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        match flag {
            Some(v) => Ok(v),
            None => Ok(self.get(key)?.unwrap_or(default)),
        }
    }
}

/// Options shared by all commands, after merging flags, environment and file.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub schema: SchemaVariant,
    pub window_seconds: f64,
    pub period_ticks: u64,
    pub seed: u64,
    pub threads: usize,
    pub threshold: f64,
    pub file: ConfigFile,
}

impl PipelineConfig {
    pub fn resolve(g: &GlobalOpts) -> Result<Self, CliError> {
        let file = match &g.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let schema = match g.schema {
            Some(v) => v,
            None => match file.get::<String>("schema")? {
                Some(s) => s.parse().map_err(CliError::Usage)?,
                None => SchemaVariant::Minimal,
            },
        };
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        let cfg = PipelineConfig {
            schema,
            window_seconds: file.pick(g.window_seconds, "window_seconds", DEFAULT_WINDOW_SECONDS)?,
            period_ticks: file.pick(g.period_ticks, "period_ticks", DEFAULT_PERIOD_TICKS)?,
            seed: file.pick(g.seed, "seed", 1)?,
            threads: file.pick(g.threads, "threads", cores)?,
            threshold: file.pick(g.threshold, "threshold", DEFAULT_THRESHOLD)?,
            file,
        };
        if !(cfg.window_seconds > 0.0) {
            return Err(CliError::Usage("--window-seconds must be positive".into()));
        }
        if cfg.period_ticks == 0 || cfg.threads == 0 {
            return Err(CliError::Usage("--period-ticks and --threads must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.threshold) {
            return Err(CliError::Usage("--threshold must lie in [0, 1]".into()));
        }
        Ok(cfg)
    }
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn file_name_for(id: &str) -> String {
    let safe: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.jsonl.gz")
}

pub fn cmd_synth(p: &PipelineConfig, a: &SynthArgs) -> Result<Vec<String>, CliError> {
    let mut cfg = match &a.synth_config {
        Some(path) => SynthConfig::from_toml(&fs::read_to_string(path)?)?,
        None => SynthConfig::default(),
    };
    cfg.match_count = p.file.pick(a.matches, "matches", cfg.match_count)?;
    cfg.frames = p.file.pick(a.frames, "frames", cfg.frames)?;
    cfg.seed = p.seed;
    Ok(write_corpus(&cfg, &a.out)?)
}

/// Validates each file and rewrites it into the store. Returns the ingested ids.
pub fn cmd_ingest(a: &IngestArgs) -> Result<Vec<String>, CliError> {
    fs::create_dir_all(&a.store)?;
    let mut entries: BTreeMap<String, String> = match MatchStore::open(&a.store) {
        Ok(store) => store
            .ids()
            .into_iter()
            .map(|id| {
                let name = file_name_for(&id);
                (id, name)
            })
            .collect(),
        Err(_) => BTreeMap::new(),
    };
    let mut ingested = Vec::new();
    for path in &a.files {
        let m = match read_match_file(path) {
            Ok(m) => m,
            Err(e) if a.skip_invalid && !matches!(e, MatchError::Io(_)) => {
                log::warn!("skipping {}: {e}", path.display());
                continue;
            }
            Err(e) => {
                let err: CliError = e.into();
                return Err(match err {
                    CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
                    other => other,
                });
            }
        };
        if ingested.contains(&m.match_id) {
            return Err(CliError::Data(format!("duplicate match id {}", m.match_id)));
        }
        let name = file_name_for(&m.match_id);
        write_match_file(a.store.join(&name), &m)?;
        entries.insert(m.match_id.clone(), name);
        ingested.push(m.match_id);
    }
    let list: Vec<(String, String)> = entries.into_iter().collect();
    MatchStore::write_index(&a.store, &list)?;
    Ok(ingested)
}

pub fn cmd_extract(p: &PipelineConfig, a: &ExtractArgs) -> Result<DatasetManifest, CliError> {
    let store = MatchStore::open(&a.store)?;
    let ids = store.ids();
    let first = ids
        .first()
        .ok_or_else(|| CliError::Data(format!("store {} is empty", a.store.display())))?;
    let roster = store.load(first)?.roster_size;
    let defaults = DatasetConfig::default();
    let cfg = DatasetConfig {
        variant: p.schema,
        window_seconds: p.window_seconds,
        period_ticks: p.period_ticks,
        drop_fraction: p.file.pick(a.drop_fraction, "drop_fraction", defaults.drop_fraction)?,
        split_seed: p.seed,
        undersample_seed: p.seed.wrapping_add(1),
        shuffle_seed: p.seed.wrapping_add(2),
        shard_capacity: p.file.pick(a.shard_capacity, "shard_capacity", defaults.shard_capacity)?,
    };
    Ok(build_dataset(&store, &cfg, roster, &a.out)?)
}

fn model_config(p: &PipelineConfig, manifest: &DatasetManifest) -> ModelConfig {
    let schema = manifest.schema();
    ModelConfig {
        roster_size: manifest.roster_size,
        per_hero_count: schema.per_hero_count(),
        window_seconds: manifest.window_seconds,
        seed: p.seed,
        ..ModelConfig::for_variant(manifest.variant)
    }
}

fn check_schema(p: &PipelineConfig, explicit: bool, manifest: &DatasetManifest) -> Result<(), CliError> {
    if explicit && p.schema != manifest.variant {
        return Err(CliError::Data(format!(
            "dataset was extracted with the {} schema, not {}",
            manifest.variant, p.schema
        )));
    }
    Ok(())
}

pub fn cmd_train(
    p: &PipelineConfig,
    schema_explicit: bool,
    a: &TrainArgs,
) -> Result<crate::train::TrainOutcome, CliError> {
    let manifest = DatasetManifest::load(&a.data)?;
    check_schema(p, schema_explicit, &manifest)?;
    let mut model = model_config(p, &manifest);
    model.learning_rate = p.file.pick(a.learning_rate, "learning_rate", model.learning_rate)?;
    model.batch_size = p.file.pick(a.batch_size, "batch_size", model.batch_size)?;
    let defaults = TrainRunConfig::new(model.clone());
    let run = TrainRunConfig {
        max_steps: p.file.pick(a.max_steps, "max_steps", defaults.max_steps)?,
        validation_interval: p.file.pick(
            a.validation_interval,
            "validation_interval",
            defaults.validation_interval,
        )?,
        checkpoint_dir: Some(a.out.clone()),
        model,
    };
    let train_pool = manifest.load_pool(&a.data, Split::Train)?;
    let val_pool = manifest.load_pool(&a.data, Split::Validation)?;
    let stats = manifest.load_norm_stats(&a.data)?;
    Ok(train(&run, &train_pool, &val_pool, &stats)?)
}

pub fn cmd_search(
    p: &PipelineConfig,
    schema_explicit: bool,
    a: &SearchArgs,
) -> Result<crate::train::SearchOutcome, CliError> {
    let manifest = DatasetManifest::load(&a.data)?;
    check_schema(p, schema_explicit, &manifest)?;
    let base = model_config(p, &manifest);
    let defaults = SearchSpace::default();
    let space = SearchSpace {
        budget: p.file.pick(a.budget, "budget", defaults.budget)?,
        steps_per_trial: p.file.pick(a.steps_per_trial, "steps_per_trial", defaults.steps_per_trial)?,
        seed: p.seed,
        ..defaults
    };
    let train_pool = manifest.load_pool(&a.data, Split::Train)?;
    let val_pool = manifest.load_pool(&a.data, Split::Validation)?;
    let stats = manifest.load_norm_stats(&a.data)?;
    Ok(random_search(&space, &base, &train_pool, &val_pool, &stats, Some(&a.out))?)
}

/// Refuses any id the manifest assigns to training or validation.
pub fn split_leak_guard(manifest: &DatasetManifest, ids: &[String]) -> Result<(), CliError> {
    for id in ids {
        if let Some(split @ (Split::Train | Split::Validation)) = manifest.split.split_of(id) {
            return Err(CliError::Data(
                EvalError::SplitLeak(format!("{id} ({})", split.as_str())).to_string(),
            ));
        }
    }
    Ok(())
}

pub fn cmd_eval(p: &PipelineConfig, a: &EvalArgs) -> Result<EvalReport, CliError> {
    let manifest = DatasetManifest::load(&a.data)?;
    let ids = if a.matches.is_empty() {
        manifest.split.ids(Split::Test).to_vec()
    } else {
        a.matches.clone()
    };
    split_leak_guard(&manifest, &ids)?;
    let ck = load_checkpoint_for(&a.checkpoint, manifest.variant)?;
    let store = MatchStore::open(&a.store)?;
    let scores = score_matches(&ck, &store, &ids, manifest.period_ticks)?;
    let (s, l) = pooled(&scores);
    let thresholds = if p.threshold == 0.5 { vec![0.5] } else { vec![0.5, p.threshold] };
    let report = EvalReport::from_scores(&s, &l, &thresholds)?;

    let mut errors = MispredictionCounts::default();
    for m in &scores {
        let tl = PredictionTimeline::from_scores(m, p.threshold);
        let c = classify_mispredictions(&tl, &m.labels, p.threshold, ck.config.window_seconds, NEAR_WINDOW_SECONDS)?;
        errors.false_negatives += c.false_negatives;
        errors.near_false_positives += c.near_false_positives;
        errors.far_false_positives += c.far_false_positives;
    }
    let correlation = health_correlation(&scores).ok();
    let distribution = time_to_death_distribution(&scores, DEFAULT_HORIZON_SECONDS);

    fs::create_dir_all(&a.out)?;
    write_with(&a.out.join(REPORT_FILE), |w| {
        writeln!(w, "matches\t{}", ids.len())?;
        report.write_summary(&mut *w)?;
        writeln!(w, "mispredictions.threshold\t{}", p.threshold)?;
        writeln!(w, "mispredictions.false_negative\t{}", errors.false_negatives)?;
        writeln!(w, "mispredictions.near_false_positive\t{}", errors.near_false_positives)?;
        writeln!(w, "mispredictions.far_false_positive\t{}", errors.far_false_positives)?;
        if let Some((rho, pv)) = correlation {
            writeln!(w, "health_spearman.rho\t{rho}")?;
            writeln!(w, "health_spearman.p_value\t{pv}")?;
        }
        Ok(())
    })?;
    write_with(&a.out.join(PR_TABLE_FILE), |w| report.curve.write_table(w))?;
    write_with(&a.out.join(TIME_TO_DEATH_FILE), |w| distribution.write_table(w))?;
    Ok(report)
}

pub fn cmd_predict(p: &PipelineConfig, a: &PredictArgs) -> Result<PredictionTimeline, CliError> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let m = read_match_file(&a.match_file)?;
    let scores = score_match(&ck, &m, p.period_ticks)?;
    let tl = PredictionTimeline::from_scores(&scores, p.threshold);
    write_with(&a.out, |w| tl.write_table(w))?;
    Ok(tl)
}

pub fn cmd_schema_dump(p: &PipelineConfig, a: &SchemaDumpArgs) -> String {
    FeatureSchema::new(a.variant.unwrap_or(p.schema)).dump()
}

/// Runs a parsed command inside a pool of `--threads` workers.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let p = PipelineConfig::resolve(&cli.global)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(p.threads)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let schema_explicit = cli.global.schema.is_some() || p.file.get::<String>("schema")?.is_some();
    pool.install(|| {
        let mut out = io::stdout().lock();
        match &cli.command {
            Command::Synth(a) => {
                let ids = cmd_synth(&p, a)?;
                writeln!(out, "wrote {} matches to {}", ids.len(), a.out.display())?;
            }
            Command::Ingest(a) => {
                let ids = cmd_ingest(a)?;
                writeln!(out, "ingested {} matches into {}", ids.len(), a.store.join(STORE_INDEX).display())?;
            }
            Command::Extract(a) => {
                let m = cmd_extract(&p, a)?;
                writeln!(
                    out,
                    "{} train shards, {} validation shards, {} test matches",
                    m.train_shards.len(),
                    m.validation_shards.len(),
                    m.split.test.len()
                )?;
            }
            Command::Train(a) => {
                let o = cmd_train(&p, schema_explicit, a)?;
                match o.best_val_ap {
                    Some(ap) => writeln!(out, "best validation AP {ap} at step {}", o.best_step)?,
                    None => writeln!(out, "no validation point; saved initial parameters")?,
                }
            }
            Command::Search(a) => {
                let o = cmd_search(&p, schema_explicit, a)?;
                writeln!(out, "best trial {} with validation AP {}", o.best().index, o.best().val_ap)?;
            }
            Command::Eval(a) => {
                let r = cmd_eval(&p, a)?;
                writeln!(out, "average precision {}", r.average_precision)?;
            }
            Command::Predict(a) => {
                cmd_predict(&p, a)?;
                writeln!(out, "wrote {}", a.out.display())?;
            }
            Command::SchemaDump(a) => out.write_all(cmd_schema_dump(&p, a).as_bytes())?,
        }
        Ok(())
    })
}

/// Parses `args`, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().lines().next().unwrap_or("").to_string());
            eprintln!("{}", err.line());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}
