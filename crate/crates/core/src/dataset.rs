//! Labeling, downsampling, negative undersampling, match-level splits,
//! binary shards and slot-balanced minibatches.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64;

use crate::features::{
    extract_frames, FeatureError, FeatureSchema, FrameFeatures, NormAccumulator,
    NormalizationStats, SchemaVariant,
};
use crate::match_data::{strip_pauses, MatchError, MatchRecord, HERO_COUNT};

pub const SHARD_CAPACITY: usize = 4000;
pub const DEFAULT_WINDOW_SECONDS: f64 = 5.0;
pub const DEFAULT_PERIOD_TICKS: u64 = 4;
pub const DEFAULT_DROP_FRACTION: f64 = 0.5;
pub const DEFAULT_BATCH_SIZE: usize = 128;

const SHARD_MAGIC: &[u8; 4] = b"DFSH";
const SHARD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("label window must be positive, got {0}")]
    NonPositiveWindow(f64),
    #[error("drop fraction must be in [0, 1), got {0}")]
    InvalidDropFraction(f64),
    #[error("checksum mismatch in shard {0}")]
    ChecksumMismatch(String),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unsupported shard version {0}")]
    VersionMismatch(u32),
    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },
    #[error("no hero slot has {0} positive and negative samples available")]
    InsufficientPositives(usize),
    #[error("match {0} is not in the store")]
    UnknownMatch(String),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn malformed(what: &str, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        what: what.to_string(),
        message: message.into(),
    }
}

pub type Labels = [bool; HERO_COUNT];

/// Stable 64-bit hash of a match id, stored in shards.
pub fn match_hash(match_id: &str) -> u64 {
    xxh3_64(match_id.as_bytes())
}

/// For every frame: does each slot die in `(t, t + window]`?
pub fn label_frames(m: &MatchRecord, window: f64) -> Result<Vec<Labels>, DatasetError> {
    if !(window > 0.0) {
        return Err(DatasetError::NonPositiveWindow(window));
    }
    let deaths = m.deaths_by_slot();
    Ok(m.frames
        .iter()
        .map(|f| label_at(&deaths, f.game_time, window))
        .collect())
}

pub(crate) fn label_at(deaths: &[Vec<f64>; HERO_COUNT], t: f64, window: f64) -> Labels {
    std::array::from_fn(|slot| {
        let times = &deaths[slot];
        let next = times.partition_point(|&tau| tau <= t);
        next < times.len() && times[next] <= t + window
    })
}

/// Indices of frames on the sampling grid: ticks congruent to the first frame's tick.
pub fn downsample(m: &MatchRecord, period_ticks: u64) -> Vec<usize> {
    let period = period_ticks.max(1);
    let Some(first) = m.frames.first().map(|f| f.tick) else {
        return Vec::new();
    };
    m.frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tick >= first && (f.tick - first) % period == 0)
        .map(|(i, _)| i)
        .collect()
}

/// One normalized frame with its ten labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    /// 10 per-hero vectors, slot-major.
    pub features: Vec<f32>,
    pub labels: Labels,
    pub match_hash: u64,
    pub game_time: f32,
}

impl LabeledSample {
    pub fn is_all_negative(&self) -> bool {
        !self.labels.iter().any(|&l| l)
    }

    pub fn label_bits(&self) -> u16 {
        self.labels
            .iter()
            .enumerate()
            .fold(0u16, |acc, (i, &l)| acc | ((l as u16) << i))
    }

    pub fn from_normalized(f: &FrameFeatures, labels: Labels, match_hash: u64) -> Self {
        LabeledSample {
            features: f.values().iter().map(|&v| v as f32).collect(),
            labels,
            match_hash,
            game_time: f.game_time as f32,
        }
    }
}

fn bits_to_labels(bits: u16) -> Labels {
    std::array::from_fn(|i| bits & (1 << i) != 0)
}

/// Drops all-negative samples with probability `drop_fraction`; keeps everything else.
pub fn undersample_negatives<I>(
    samples: I,
    drop_fraction: f64,
    seed: u64,
) -> Result<impl Iterator<Item = LabeledSample>, DatasetError>
where
    I: IntoIterator<Item = LabeledSample>,
{
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(DatasetError::InvalidDropFraction(drop_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(samples.into_iter().filter(move |s| {
        if s.is_all_negative() {
            rng.random::<f64>() >= drop_fraction
        } else {
            true
        }
    }))
}

/// Up to [`SHARD_CAPACITY`] samples of one schema variant.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    pub variant: SchemaVariant,
    pub per_hero_count: usize,
    pub samples: Vec<LabeledSample>,
}

pub fn encode_shard(shard: &Shard) -> Result<Vec<u8>, DatasetError> {
    if shard.samples.len() > SHARD_CAPACITY {
        return Err(malformed(
            "shard",
            format!("{} samples exceed capacity {SHARD_CAPACITY}", shard.samples.len()),
        ));
    }
    let width = HERO_COUNT * shard.per_hero_count;
    let mut buf = Vec::with_capacity(32 + shard.samples.len() * (width * 4 + 14));
    buf.extend_from_slice(SHARD_MAGIC);
    buf.write_u32::<LittleEndian>(SHARD_VERSION)?;
    buf.write_u8(shard.variant.code())?;
    buf.write_u32::<LittleEndian>(shard.per_hero_count as u32)?;
    buf.write_u32::<LittleEndian>(shard.samples.len() as u32)?;
    for s in &shard.samples {
        if s.features.len() != width {
            return Err(DatasetError::SchemaMismatch(format!(
                "sample has {} features, shard expects {width}",
                s.features.len()
            )));
        }
        for &v in &s.features {
            buf.write_f32::<LittleEndian>(v)?;
        }
        buf.write_u16::<LittleEndian>(s.label_bits())?;
        buf.write_u64::<LittleEndian>(s.match_hash)?;
        buf.write_f32::<LittleEndian>(s.game_time)?;
    }
    let checksum = xxh3_64(&buf);
    buf.write_u64::<LittleEndian>(checksum)?;
    Ok(buf)
}

pub fn decode_shard(bytes: &[u8], name: &str) -> Result<Shard, DatasetError> {
    if bytes.len() < 8 + 17 {
        return Err(malformed("shard", "truncated"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if xxh3_64(body) != stored {
        return Err(DatasetError::ChecksumMismatch(name.to_string()));
    }
    let mut r = body;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SHARD_MAGIC {
        return Err(malformed("shard", "bad magic"));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != SHARD_VERSION {
        return Err(DatasetError::VersionMismatch(version));
    }
    let code = r.read_u8()?;
    let variant = SchemaVariant::from_code(code)
        .ok_or_else(|| DatasetError::SchemaMismatch(format!("unknown variant tag {code}")))?;
    let per_hero_count = r.read_u32::<LittleEndian>()? as usize;
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count > SHARD_CAPACITY {
        return Err(malformed("shard", format!("sample count {count} over capacity")));
    }
    let width = HERO_COUNT * per_hero_count;
    if r.len() != count * (width * 4 + 14) {
        return Err(malformed("shard", "payload size does not match header"));
    }
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let mut features = vec![0f32; width];
        r.read_f32_into::<LittleEndian>(&mut features)?;
        let labels = bits_to_labels(r.read_u16::<LittleEndian>()?);
        let match_hash = r.read_u64::<LittleEndian>()?;
        let game_time = r.read_f32::<LittleEndian>()?;
        samples.push(LabeledSample {
            features,
            labels,
            match_hash,
            game_time,
        });
    }
    Ok(Shard {
        variant,
        per_hero_count,
        samples,
    })
}

pub fn write_shard(path: impl AsRef<Path>, shard: &Shard) -> Result<(), DatasetError> {
    let bytes = encode_shard(shard)?;
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<Shard, DatasetError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    decode_shard(&bytes, &path.display().to_string())
}

/// Reads a shard and checks it holds the expected schema.
pub fn read_shard_as(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
) -> Result<Shard, DatasetError> {
    let shard = read_shard(path)?;
    if shard.variant != schema.variant() || shard.per_hero_count != schema.per_hero_count() {
        return Err(DatasetError::SchemaMismatch(format!(
            "shard is {}/{} but schema is {}/{}",
            shard.variant,
            shard.per_hero_count,
            schema.variant(),
            schema.per_hero_count()
        )));
    }
    Ok(shard)
}

/// Splits `samples` into consecutive shards of at most `capacity` and writes
/// them as `{prefix}-00000.shard`, ... in `dir`. Returns the written paths.
pub fn write_shards(
    samples: &[LabeledSample],
    schema: &FeatureSchema,
    dir: impl AsRef<Path>,
    prefix: &str,
    capacity: usize,
) -> Result<Vec<PathBuf>, DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let capacity = capacity.clamp(1, SHARD_CAPACITY);
    samples
        .chunks(capacity)
        .enumerate()
        .map(|(i, chunk)| {
            let path = dir.join(format!("{prefix}-{i:05}.shard"));
            let shard = Shard {
                variant: schema.variant(),
                per_hero_count: schema.per_hero_count(),
                samples: chunk.to_vec(),
            };
            write_shard(&path, &shard)?;
            Ok(path)
        })
        .collect()
}

/// Disjoint match-level train/validation/test assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitManifest {
    pub seed: u64,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "validation" => Some(Split::Validation),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl SplitManifest {
    /// Shuffles the sorted ids with `seed` and cuts them 80/10/10.
    pub fn split(ids: &[String], seed: u64) -> Self {
        let mut ids: Vec<String> = ids.to_vec();
        ids.sort();
        ids.dedup();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let n_train = (0.8 * n as f64).round() as usize;
        let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);
        let test = ids.split_off(n_train + n_val);
        let validation = ids.split_off(n_train);
        SplitManifest {
            seed,
            train: ids,
            validation,
            test,
        }
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        if self.train.iter().any(|x| x == id) {
            Some(Split::Train)
        } else if self.validation.iter().any(|x| x == id) {
            Some(Split::Validation)
        } else if self.test.iter().any(|x| x == id) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn ids(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Raw (unnormalized) features and labels of one match on the sampling grid.
pub struct PreparedMatch {
    pub match_id: String,
    pub frames: Vec<FrameFeatures>,
    pub labels: Vec<Labels>,
}

/// Strips pauses, downsamples, extracts features and labels against
/// full-resolution death times.
pub fn prepare_match(
    m: &MatchRecord,
    schema: &FeatureSchema,
    window: f64,
    period_ticks: u64,
) -> Result<PreparedMatch, DatasetError> {
    let clean = strip_pauses(m)?;
    let keep = downsample(&clean, period_ticks);
    let frames = extract_frames(&clean, &keep, schema)?;
    let all_labels = label_frames(&clean, window)?;
    let labels = keep.iter().map(|&i| all_labels[i]).collect();
    Ok(PreparedMatch {
        match_id: m.match_id.clone(),
        frames,
        labels,
    })
}

impl PreparedMatch {
    pub fn labeled_samples(
        &self,
        stats: &NormalizationStats,
    ) -> Result<Vec<LabeledSample>, DatasetError> {
        let hash = match_hash(&self.match_id);
        self.frames
            .iter()
            .zip(&self.labels)
            .map(|(f, &l)| {
                let n = crate::features::normalize(f, stats)?;
                Ok(LabeledSample::from_normalized(&n, l, hash))
            })
            .collect()
    }
}

/// Anything that can hand out matches by id.
pub trait MatchSource: Sync {
    fn ids(&self) -> Vec<String>;
    fn load(&self, id: &str) -> Result<MatchRecord, DatasetError>;
}

/// Directory of match files with an `index.tsv` (`match_id<TAB>file name`).
pub struct MatchStore {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

pub const STORE_INDEX: &str = "index.tsv";

impl MatchStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let dir = dir.as_ref().to_path_buf();
        let file = File::open(dir.join(STORE_INDEX))?;
        let mut entries = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (id, name) = line
                .split_once('\t')
                .ok_or_else(|| malformed("store index", line.clone()))?;
            entries.push((id.to_string(), name.to_string()));
        }
        Ok(MatchStore { dir, entries })
    }

    /// Writes the index for `entries` into `dir`.
    pub fn write_index(
        dir: impl AsRef<Path>,
        entries: &[(String, String)],
    ) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(dir.as_ref().join(STORE_INDEX))?);
        for (id, name) in entries {
            writeln!(w, "{id}\t{name}")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn path_of(&self, id: &str) -> Option<PathBuf> {
        self.entries
            .iter()
            .find(|(i, _)| i == id)
            .map(|(_, name)| self.dir.join(name))
    }
}

impl MatchSource for MatchStore {
    fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|(id, _)| id.clone()).collect()
    }

    fn load(&self, id: &str) -> Result<MatchRecord, DatasetError> {
        let path = self
            .path_of(id)
            .ok_or_else(|| DatasetError::UnknownMatch(id.to_string()))?;
        Ok(crate::match_data::read_match_file(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub variant: SchemaVariant,
    pub window_seconds: f64,
    pub period_ticks: u64,
    pub drop_fraction: f64,
    pub split_seed: u64,
    pub undersample_seed: u64,
    pub shuffle_seed: u64,
    pub shard_capacity: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            variant: SchemaVariant::Minimal,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            period_ticks: DEFAULT_PERIOD_TICKS,
            drop_fraction: DEFAULT_DROP_FRACTION,
            split_seed: 1,
            undersample_seed: 2,
            shuffle_seed: 3,
            shard_capacity: SHARD_CAPACITY,
        }
    }
}

/// Everything needed to find a built dataset again.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub variant: SchemaVariant,
    pub roster_size: usize,
    pub window_seconds: f64,
    pub period_ticks: u64,
    pub drop_fraction: f64,
    pub undersample_seed: u64,
    pub shuffle_seed: u64,
    pub split: SplitManifest,
    /// Relative to the manifest's directory.
    pub norm_stats: String,
    pub train_shards: Vec<String>,
    pub validation_shards: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";
pub const NORM_STATS_FILE: &str = "norm_stats.tsv";

impl DatasetManifest {
    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema::with_roster(self.variant, self.roster_size)
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "variant\t{}", self.variant)?;
        writeln!(w, "roster_size\t{}", self.roster_size)?;
        writeln!(w, "window_seconds\t{}", self.window_seconds)?;
        writeln!(w, "period_ticks\t{}", self.period_ticks)?;
        writeln!(w, "drop_fraction\t{}", self.drop_fraction)?;
        writeln!(w, "split_seed\t{}", self.split.seed)?;
        writeln!(w, "undersample_seed\t{}", self.undersample_seed)?;
        writeln!(w, "shuffle_seed\t{}", self.shuffle_seed)?;
        writeln!(w, "norm_stats\t{}", self.norm_stats)?;
        for split in [Split::Train, Split::Validation, Split::Test] {
            for id in self.split.ids(split) {
                writeln!(w, "match\t{}\t{id}", split.as_str())?;
            }
        }
        for p in &self.train_shards {
            writeln!(w, "shard\ttrain\t{p}")?;
        }
        for p in &self.validation_shards {
            writeln!(w, "shard\tvalidation\t{p}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, DatasetError> {
        let mut m = DatasetManifest {
            variant: SchemaVariant::Minimal,
            roster_size: crate::match_data::DEFAULT_ROSTER_SIZE,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            period_ticks: DEFAULT_PERIOD_TICKS,
            drop_fraction: DEFAULT_DROP_FRACTION,
            undersample_seed: 0,
            shuffle_seed: 0,
            split: SplitManifest {
                seed: 0,
                train: vec![],
                validation: vec![],
                test: vec![],
            },
            norm_stats: NORM_STATS_FILE.to_string(),
            train_shards: vec![],
            validation_shards: vec![],
        };
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, DatasetError> {
            v.parse()
                .map_err(|_| malformed("manifest", format!("bad value for {key}: {v}")))
        }
        for line in r.lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match cols.as_slice() {
                ["variant", v] => {
                    m.variant = v.parse().map_err(|e: String| malformed("manifest", e))?
                }
                ["roster_size", v] => m.roster_size = num("roster_size", v)?,
                ["window_seconds", v] => m.window_seconds = num("window_seconds", v)?,
                ["period_ticks", v] => m.period_ticks = num("period_ticks", v)?,
                ["drop_fraction", v] => m.drop_fraction = num("drop_fraction", v)?,
                ["split_seed", v] => m.split.seed = num("split_seed", v)?,
                ["undersample_seed", v] => m.undersample_seed = num("undersample_seed", v)?,
                ["shuffle_seed", v] => m.shuffle_seed = num("shuffle_seed", v)?,
                ["norm_stats", v] => m.norm_stats = v.to_string(),
                ["match", split, id] => {
                    let list = match Split::parse(split) {
                        Some(Split::Train) => &mut m.split.train,
                        Some(Split::Validation) => &mut m.split.validation,
                        Some(Split::Test) => &mut m.split.test,
                        None => return Err(malformed("manifest", format!("bad split {split}"))),
                    };
                    list.push(id.to_string());
                }
                ["shard", "train", p] => m.train_shards.push(p.to_string()),
                ["shard", "validation", p] => m.validation_shards.push(p.to_string()),
                _ => return Err(malformed("manifest", format!("unrecognised line `{line}`"))),
            }
        }
        Ok(m)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::read(BufReader::new(File::open(dir.as_ref().join(MANIFEST_FILE))?))
    }

    pub fn load_norm_stats(&self, dir: impl AsRef<Path>) -> Result<NormalizationStats, DatasetError> {
        let f = File::open(dir.as_ref().join(&self.norm_stats))?;
        Ok(NormalizationStats::read(BufReader::new(f))?)
    }

    pub fn load_pool(&self, dir: impl AsRef<Path>, split: Split) -> Result<ShardPool, DatasetError> {
        let schema = self.schema();
        let list = match split {
            Split::Train => &self.train_shards,
            Split::Validation => &self.validation_shards,
            Split::Test => {
                return Err(malformed("manifest", "the test split has no shards"));
            }
        };
        let shards = list
            .iter()
            .map(|p| read_shard_as(dir.as_ref().join(p), &schema))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ShardPool::new(shards))
    }
}

/// Builds normalization stats and train/validation shards from `source`.
///
/// Train and validation samples are undersampled and globally shuffled
/// before sharding; test matches are only recorded in the manifest.
pub fn build_dataset(
    source: &dyn MatchSource,
    cfg: &DatasetConfig,
    roster_size: usize,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, DatasetError> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let schema = FeatureSchema::with_roster(cfg.variant, roster_size);
    let split = SplitManifest::split(&source.ids(), cfg.split_seed);

    let prepare = |id: &String| -> Result<PreparedMatch, DatasetError> {
        let m = source.load(id)?;
        prepare_match(&m, &schema, cfg.window_seconds, cfg.period_ticks)
    };

    // first pass: normalization statistics over training matches only
    let stats = split
        .train
        .par_iter()
        .map(|id| {
            let p = prepare(id)?;
            let mut acc = NormAccumulator::new(schema.per_hero_count());
            for f in &p.frames {
                acc.observe(f)?;
            }
            Ok::<_, DatasetError>(acc)
        })
        .try_reduce(
            || NormAccumulator::new(schema.per_hero_count()),
            |a, b| Ok(a.merge(b)),
        )?
        .finish(cfg.variant)?;
    stats.write(
        &schema,
        BufWriter::new(File::create(out_dir.join(NORM_STATS_FILE))?),
    )?;

    let mut shard_lists = Vec::new();
    for (split_kind, seed_offset) in [(Split::Train, 0u64), (Split::Validation, 1)] {
        let per_match: Vec<Vec<LabeledSample>> = split
            .ids(split_kind)
            .par_iter()
            .map(|id| prepare(id)?.labeled_samples(&stats))
            .collect::<Result<_, DatasetError>>()?;
        let mut samples: Vec<LabeledSample> = undersample_negatives(
            per_match.into_iter().flatten(),
            cfg.drop_fraction,
            cfg.undersample_seed.wrapping_add(seed_offset),
        )?
        .collect();
        samples.shuffle(&mut ChaCha8Rng::seed_from_u64(
            cfg.shuffle_seed.wrapping_add(seed_offset),
        ));
        let paths = write_shards(
            &samples,
            &schema,
            out_dir.join(split_kind.as_str()),
            split_kind.as_str(),
            cfg.shard_capacity,
        )?;
        shard_lists.push(
            paths
                .iter()
                .map(|p| {
                    p.strip_prefix(out_dir)
                        .unwrap_or(p)
                        .to_string_lossy()
                        .into_owned()
                })
                .collect::<Vec<_>>(),
        );
    }
    let validation_shards = shard_lists.pop().unwrap_or_default();
    let train_shards = shard_lists.pop().unwrap_or_default();

    let manifest = DatasetManifest {
        variant: cfg.variant,
        roster_size,
        window_seconds: cfg.window_seconds,
        period_ticks: cfg.period_ticks,
        drop_fraction: cfg.drop_fraction,
        undersample_seed: cfg.undersample_seed,
        shuffle_seed: cfg.shuffle_seed,
        split,
        norm_stats: NORM_STATS_FILE.to_string(),
        train_shards,
        validation_shards,
    };
    let mut w = BufWriter::new(File::create(out_dir.join(MANIFEST_FILE))?);
    manifest.write(&mut w)?;
    w.flush()?;
    Ok(manifest)
}

#[derive(Debug, Clone, Default)]
struct SlotIndex {
    positives: Vec<u32>,
    negatives: Vec<u32>,
}

/// In-memory shards with per-slot positive/negative indices.
#[derive(Debug, Clone)]
pub struct ShardPool {
    shards: Vec<Shard>,
    index: Vec<[SlotIndex; HERO_COUNT]>,
}

/// A minibatch balanced 50/50 on `selected_slot`.
#[derive(Debug, Clone)]
pub struct BalancedBatch<'a> {
    pub selected_slot: usize,
    pub samples: Vec<&'a LabeledSample>,
}

impl ShardPool {
    pub fn new(shards: Vec<Shard>) -> Self {
        let index = shards
            .iter()
            .map(|shard| {
                let mut idx: [SlotIndex; HERO_COUNT] = Default::default();
                for (i, s) in shard.samples.iter().enumerate() {
                    for (slot, &l) in s.labels.iter().enumerate() {
                        if l {
                            idx[slot].positives.push(i as u32);
                        } else {
                            idx[slot].negatives.push(i as u32);
                        }
                    }
                }
                idx
            })
            .collect();
        ShardPool { shards, index }
    }

    pub fn from_samples(schema: &FeatureSchema, samples: Vec<LabeledSample>) -> Self {
        let shards = samples
            .chunks(SHARD_CAPACITY)
            .map(|c| Shard {
                variant: schema.variant(),
                per_hero_count: schema.per_hero_count(),
                samples: c.to_vec(),
            })
            .collect();
        Self::new(shards)
    }

    pub fn shards(&self) -> &[Shard] {
        &self.shards
    }

    pub fn samples(&self) -> impl Iterator<Item = &LabeledSample> {
        self.shards.iter().flat_map(|s| s.samples.iter())
    }

    pub fn len(&self) -> usize {
        self.shards.iter().map(|s| s.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn totals(&self, slot: usize) -> (usize, usize) {
        self.index.iter().fold((0, 0), |(p, n), idx| {
            (p + idx[slot].positives.len(), n + idx[slot].negatives.len())
        })
    }

    /// Slots with at least `half` positives and `half` negatives in the pool.
    pub fn feasible_slots(&self, half: usize) -> Vec<usize> {
        (0..HERO_COUNT)
            .filter(|&s| {
                let (p, n) = self.totals(s);
                p >= half && n >= half
            })
            .collect()
    }

    fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        first_shard: usize,
        slot: usize,
        want: usize,
        positive: bool,
        out: &mut Vec<(usize, u32)>,
    ) {
        let candidates = |shard: usize| {
            if positive {
                &self.index[shard][slot].positives
            } else {
                &self.index[shard][slot].negatives
            }
        };
        let take_from = |shard: usize, out: &mut Vec<(usize, u32)>, rng: &mut R| {
            let c = candidates(shard);
            let need = want - out.len();
            let k = need.min(c.len());
            for i in index::sample(rng, c.len(), k) {
                out.push((shard, c[i]));
            }
        };
        take_from(first_shard, out, rng);
        if out.len() < want {
            let mut rest: Vec<usize> = (0..self.shards.len()).filter(|&s| s != first_shard).collect();
            rest.shuffle(rng);
            for shard in rest {
                if out.len() == want {
                    break;
                }
                take_from(shard, out, rng);
            }
        }
    }
}

/// Draws a batch with exactly `batch_size / 2` positives and negatives for a
/// uniformly chosen slot, starting from one random shard and topping up from
/// further random shards when it runs short.
pub fn sample_balanced_batch<'a, R: Rng + ?Sized>(
    pool: &'a ShardPool,
    batch_size: usize,
    rng: &mut R,
) -> Result<BalancedBatch<'a>, DatasetError> {
    let half = batch_size / 2;
    let feasible = pool.feasible_slots(half.max(1));
    if feasible.is_empty() || pool.shards.is_empty() {
        return Err(DatasetError::InsufficientPositives(half));
    }
    let slot = feasible[rng.random_range(0..feasible.len())];
    let first = rng.random_range(0..pool.shards.len());
    let mut picks = Vec::with_capacity(2 * half);
    pool.draw(rng, first, slot, half, true, &mut picks);
    let mut negatives = Vec::with_capacity(half);
    pool.draw(rng, first, slot, half, false, &mut negatives);
    picks.extend(negatives);
    Ok(BalancedBatch {
        selected_slot: slot,
        samples: picks
            .into_iter()
            .map(|(shard, i)| &pool.shards[shard].samples[i as usize])
            .collect(),
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::match_data::tests::simple_match;

    /// Minimal-schema pool whose labels follow each hero's first feature.
    pub(crate) fn toy_pool(n: usize, seed: u64) -> (ShardPool, NormalizationStats) {
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let per = schema.per_hero_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..n)
            .map(|i| {
                let features: Vec<f32> = (0..schema.frame_width()).map(|_| rng.random()).collect();
                let labels = std::array::from_fn(|s| features[s * per] > 0.7);
                LabeledSample {
                    features,
                    labels,
                    match_hash: i as u64,
                    game_time: i as f32,
                }
            })
            .collect();
        let stats = NormalizationStats {
            variant: SchemaVariant::Minimal,
            min: vec![0.0; per],
            max: vec![1.0; per],
        };
        (ShardPool::from_samples(&schema, samples), stats)
    }
    use crate::match_data::DeathEvent;

    fn sample(labels: Labels, width: usize, tag: f32) -> LabeledSample {
        LabeledSample {
            features: (0..width).map(|i| tag + i as f32 * 0.01).collect(),
            labels,
            match_hash: tag as u64,
            game_time: tag,
        }
    }

    #[test]
    fn window_boundaries() {
        let mut m = simple_match(1);
        m.frames[0].game_time = 5.5;
        m.deaths = vec![DeathEvent { slot: 2, time: 10.0 }];
        assert!(label_frames(&m, 5.0).unwrap()[0][2]);
        m.frames[0].game_time = 4.9;
        assert!(!label_frames(&m, 5.0).unwrap()[0][2]);
        // a death exactly at t is "already dead"
        m.frames[0].game_time = 10.0;
        assert!(!label_frames(&m, 5.0).unwrap()[0][2]);
        m.frames[0].game_time = 5.0;
        assert!(label_frames(&m, 5.0).unwrap()[0][2]);
        assert!(matches!(
            label_frames(&m, 0.0),
            Err(DatasetError::NonPositiveWindow(_))
        ));
    }

    #[test]
    fn downsample_counts() {
        let mut m = simple_match(12);
        for (i, f) in m.frames.iter_mut().enumerate() {
            f.tick = 100 + i as u64;
        }
        assert_eq!(downsample(&m, 4), vec![0, 4, 8]);
        assert_eq!(downsample(&m, 1).len(), 12);
        for n in 1..40 {
            for period in 1..7u64 {
                let mut m = simple_match(n);
                for (i, f) in m.frames.iter_mut().enumerate() {
                    f.tick = 7 + i as u64;
                }
                assert_eq!(downsample(&m, period).len(), n.div_ceil(period as usize));
            }
        }
    }

    #[test]
    fn undersampling_keeps_positives() {
        let mut pos = [false; HERO_COUNT];
        pos[4] = true;
        let all_pos: Vec<_> = (0..100).map(|i| sample(pos, 10, i as f32)).collect();
        let out: Vec<_> = undersample_negatives(all_pos.clone(), 0.5, 1).unwrap().collect();
        assert_eq!(out, all_pos);

        let neg: Vec<_> = (0..100).map(|i| sample([false; 10], 10, i as f32)).collect();
        let out: Vec<_> = undersample_negatives(neg.clone(), 0.0, 1).unwrap().collect();
        assert_eq!(out, neg);
        let a: Vec<_> = undersample_negatives(neg.clone(), 0.5, 9).unwrap().collect();
        let b: Vec<_> = undersample_negatives(neg.clone(), 0.5, 9).unwrap().collect();
        assert_eq!(a, b);
        assert!(undersample_negatives(neg, 1.0, 1).is_err());
    }

    #[test]
    fn shard_sizes_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let samples: Vec<_> = (0..9000)
            .map(|i| sample([i % 7 == 0; HERO_COUNT], 150, i as f32))
            .collect();
        let paths = write_shards(&samples, &schema, dir.path(), "train", SHARD_CAPACITY).unwrap();
        let sizes: Vec<usize> = paths
            .iter()
            .map(|p| read_shard(p).unwrap().samples.len())
            .collect();
        assert_eq!(sizes, vec![4000, 4000, 1000]);
        assert_eq!(read_shard(&paths[2]).unwrap().samples, samples[8000..]);

        let mut bytes = fs::read(&paths[0]).unwrap();
        bytes[100] ^= 0x40;
        fs::write(&paths[0], &bytes).unwrap();
        assert!(matches!(
            read_shard(&paths[0]),
            Err(DatasetError::ChecksumMismatch(_))
        ));

        let medium = FeatureSchema::new(SchemaVariant::Medium);
        assert!(matches!(
            read_shard_as(&paths[1], &medium),
            Err(DatasetError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn split_is_a_partition() {
        let ids: Vec<String> = (0..250).map(|i| format!("m{i}")).collect();
        let s = SplitManifest::split(&ids, 42);
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (200, 25, 25));
        let mut all: Vec<String> = s.train.iter().chain(&s.validation).chain(&s.test).cloned().collect();
        all.sort();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(all, expected);
        assert_eq!(SplitManifest::split(&ids, 42), s);
        assert_ne!(SplitManifest::split(&ids, 43), s);
    }

    #[test]
    fn manifest_round_trip() {
        let ids: Vec<String> = (0..20).map(|i| format!("m{i}")).collect();
        let m = DatasetManifest {
            variant: SchemaVariant::Medium,
            roster_size: 130,
            window_seconds: 5.0,
            period_ticks: 4,
            drop_fraction: 0.5,
            undersample_seed: 7,
            shuffle_seed: 8,
            split: SplitManifest::split(&ids, 3),
            norm_stats: NORM_STATS_FILE.into(),
            train_shards: vec!["train/train-00000.shard".into()],
            validation_shards: vec!["validation/validation-00000.shard".into()],
        };
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(DatasetManifest::read(&buf[..]).unwrap(), m);
    }

    #[test]
    fn balanced_batches() {
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        let mut samples = Vec::new();
        for i in 0..3000 {
            let mut labels = [false; HERO_COUNT];
            labels[i % HERO_COUNT] = i % 13 == 0;
            samples.push(sample(labels, 150, i as f32));
        }
        let pool = ShardPool::from_samples(&schema, samples);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // positives per slot are ~23, so a 32 batch needs no top-up but 64 would fail
        for _ in 0..200 {
            let b = sample_balanced_batch(&pool, 32, &mut rng).unwrap();
            let pos = b.samples.iter().filter(|s| s.labels[b.selected_slot]).count();
            assert_eq!(pos, 16);
            assert_eq!(b.samples.len(), 32);
        }
        assert!(matches!(
            sample_balanced_batch(&pool, 128, &mut rng),
            Err(DatasetError::InsufficientPositives(64))
        ));

        let none = ShardPool::from_samples(
            &schema,
            (0..500).map(|i| sample([false; 10], 150, i as f32)).collect(),
        );
        assert!(matches!(
            sample_balanced_batch(&none, 128, &mut rng),
            Err(DatasetError::InsufficientPositives(_))
        ));
    }

    #[test]
    fn top_up_across_shards() {
        let schema = FeatureSchema::new(SchemaVariant::Minimal);
        // 3 shards of 40 samples with 10 positives each for every slot
        let shards: Vec<Shard> = (0..3)
            .map(|k| Shard {
                variant: SchemaVariant::Minimal,
                per_hero_count: 15,
                samples: (0..40)
                    .map(|i| sample([i < 10; HERO_COUNT], 150, (k * 100 + i) as f32))
                    .collect(),
            })
            .collect();
        let pool = ShardPool::new(shards);
        let _ = schema;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = sample_balanced_batch(&pool, 50, &mut rng).unwrap();
        let pos: Vec<_> = b.samples.iter().filter(|s| s.labels[b.selected_slot]).collect();
        assert_eq!(pos.len(), 25);
        let distinct: std::collections::HashSet<u32> =
            pos.iter().map(|s| s.game_time.to_bits()).collect();
        assert_eq!(distinct.len(), 25, "no sample drawn twice");
    }
}
