//! Training loop with validation checkpointing, and random search.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::{sample_balanced_batch, DatasetError, LabeledSample, ShardPool};
use crate::eval::{average_precision, pr_curve, EvalError};
use crate::features::NormalizationStats;
use crate::match_data::HERO_COUNT;
use crate::model::{
    adam_step, init_params, loss_and_grad_batch, predict, save_checkpoint, stack_features,
    AdamState, Checkpoint, ModelConfig, ModelError, ModelParams,
};

pub const METRICS_FILE: &str = "metrics.tsv";
pub const BEST_CHECKPOINT_FILE: &str = "best.ckpt";
pub const TRIALS_FILE: &str = "trials.tsv";

const SCORE_CHUNK: usize = 2048;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} positives needed per batch but the pool cannot supply them for any slot")]
    InsufficientPositives(usize),
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error(transparent)]
    Dataset(DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<DatasetError> for TrainError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InsufficientPositives(n) => TrainError::InsufficientPositives(n),
            other => TrainError::Dataset(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainRunConfig {
    pub model: ModelConfig,
    pub max_steps: u64,
    pub validation_interval: u64,
    /// Where `best.ckpt` and `metrics.tsv` go; nothing is written when `None`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl TrainRunConfig {
    pub fn new(model: ModelConfig) -> Self {
        TrainRunConfig {
            model,
            max_steps: 200_000,
            validation_interval: 2_000,
            checkpoint_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: u64,
    /// Mean batch loss since the previous row.
    pub train_loss: f64,
    pub val_ap: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    /// Running maximum of validation AP, one entry per row.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::NEG_INFINITY;
        self.rows
            .iter()
            .map(|r| {
                best = best.max(r.val_ap);
                best
            })
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "step\ttrain_loss\tval_ap")?;
        for r in &self.rows {
            writeln!(w, "{}\t{}\t{}", r.step, r.train_loss, r.val_ap)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    /// Step of the best checkpoint; 0 with no validation point.
    pub best_step: u64,
    pub best_val_ap: Option<f64>,
    pub log: MetricsLog,
}

/// Scores every sample in `samples` on all ten outputs; rows follow input order.
pub fn score_samples(
    params: &ModelParams<f32>,
    samples: &[&LabeledSample],
) -> Result<Vec<[f32; HERO_COUNT]>, ModelError> {
    let chunks = samples
        .par_chunks(SCORE_CHUNK)
        .map(|chunk| {
            let x = stack_features::<f32>(chunk.iter().map(|s| s.features.as_slice()));
            let probs = predict(params, x.view())?;
            Ok(probs
                .rows()
                .into_iter()
                .map(|r| std::array::from_fn(|s| r[s]))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Average precision over every (sample, slot) pair of a pool.
pub fn pool_average_precision(params: &ModelParams<f32>, pool: &ShardPool) -> Result<f64, TrainError> {
    let samples: Vec<&LabeledSample> = pool.samples().collect();
    let probs = score_samples(params, &samples)?;
    let mut scores = Vec::with_capacity(samples.len() * HERO_COUNT);
    let mut labels = Vec::with_capacity(samples.len() * HERO_COUNT);
    for (s, p) in samples.iter().zip(&probs) {
        for slot in 0..HERO_COUNT {
            scores.push(p[slot] as f64);
            labels.push(s.labels[slot]);
        }
    }
    Ok(average_precision(&pr_curve(&scores, &labels)?))
}

/// Balanced-batch Adam training; keeps the parameters with the best
/// validation AP. Deterministic for fixed seeds.
pub fn train(
    cfg: &TrainRunConfig,
    train_pool: &ShardPool,
    validation_pool: &ShardPool,
    stats: &NormalizationStats,
) -> Result<TrainOutcome, TrainError> {
    let mc = &cfg.model;
    mc.validate()?;
    if let Some(dir) = &cfg.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut params: ModelParams<f32> = init_params(mc, mc.seed)?;
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(mc.seed);
    rng.set_stream(1);
    let interval = cfg.validation_interval.max(1);

    let checkpoint = |params: &ModelParams<f32>, step: u64| Checkpoint {
        config: mc.clone(),
        params: params.clone(),
        stats: stats.clone(),
        step,
    };
    let mut best = checkpoint(&params, 0);
    let mut best_step = 0;
    let mut best_ap: Option<f64> = None;
    let mut log = MetricsLog::default();
    let (mut loss_sum, mut loss_count) = (0.0f64, 0u64);

    for step in 1..=cfg.max_steps {
        let batch = sample_balanced_batch(train_pool, mc.batch_size, &mut rng)?;
        let (loss, grads) = loss_and_grad_batch(&params, &batch)?;
        adam_step(&mut params, &mut adam, &grads, mc.learning_rate)?;
        loss_sum += loss as f64;
        loss_count += 1;

        if step % interval == 0 || step == cfg.max_steps {
            let val_ap = pool_average_precision(&params, validation_pool)?;
            let row = MetricsRow {
                step,
                train_loss: loss_sum / loss_count as f64,
                val_ap,
            };
            debug!("step {step} loss {:.5} val_ap {val_ap:.5}", row.train_loss);
            log.rows.push(row);
            (loss_sum, loss_count) = (0.0, 0);
            if best_ap.is_none_or(|b| val_ap > b) {
                best_ap = Some(val_ap);
                best_step = step;
                best = checkpoint(&params, step);
                if let Some(dir) = &cfg.checkpoint_dir {
                    save_checkpoint(dir.join(BEST_CHECKPOINT_FILE), &best)?;
                }
            }
        }
    }
    if let Some(dir) = &cfg.checkpoint_dir {
        if best_ap.is_none() {
            save_checkpoint(dir.join(BEST_CHECKPOINT_FILE), &best)?;
        }
        let mut w = BufWriter::new(File::create(dir.join(METRICS_FILE))?);
        log.write(&mut w)?;
        w.flush()?;
    }
    info!("best validation AP {best_ap:?} at step {best_step}");
    Ok(TrainOutcome {
        best,
        best_step,
        best_val_ap: best_ap,
        log,
    })
}

/// Ranges the search draws from. Layer widths are drawn independently per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub shared_depth: (usize, usize),
    pub final_depth: (usize, usize),
    pub widths: Vec<usize>,
    /// Sampled log-uniformly.
    pub learning_rate: (f64, f64),
    pub batch_sizes: Vec<usize>,
    pub budget: usize,
    pub steps_per_trial: u64,
    pub validation_interval: u64,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            shared_depth: (2, 4),
            final_depth: (1, 4),
            widths: vec![16, 32, 64, 128, 256],
            learning_rate: (1e-5, 1e-3),
            batch_sizes: vec![64, 128, 256],
            budget: 8,
            steps_per_trial: 2_000,
            validation_interval: 500,
            seed: 0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidSpace(m.into()));
        if self.budget == 0 {
            return bad("budget must be at least 1");
        }
        if self.shared_depth.0 == 0 || self.shared_depth.0 > self.shared_depth.1 {
            return bad("shared depth range must be non-empty and start at 1 or more");
        }
        if self.final_depth.0 > self.final_depth.1 {
            return bad("final depth range is empty");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be non-empty and positive");
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.iter().any(|&b| b < 2) {
            return bad("batch sizes must be non-empty and at least 2");
        }
        let (lo, hi) = self.learning_rate;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("learning rate range must be positive and ordered");
        }
        Ok(())
    }

    /// The `budget` configurations, identical for identical seeds.
    pub fn sample_configs(&self, base: &ModelConfig) -> Result<Vec<ModelConfig>, TrainError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let layers = |rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)| -> Vec<usize> {
            let depth = rng.random_range(lo..=hi);
            (0..depth)
                .map(|_| self.widths[rng.random_range(0..self.widths.len())])
                .collect()
        };
        (0..self.budget)
            .map(|i| {
                let shared_layers = layers(&mut rng, self.shared_depth);
                let final_layers = layers(&mut rng, self.final_depth);
                let (lo, hi) = self.learning_rate;
                let learning_rate = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
                let batch_size = self.batch_sizes[rng.random_range(0..self.batch_sizes.len())];
                let cfg = ModelConfig {
                    shared_layers,
                    final_layers,
                    learning_rate,
                    batch_size,
                    seed: self.seed.wrapping_add(i as u64),
                    ..base.clone()
                };
                cfg.validate()?;
                Ok(cfg)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct Trial {
    pub index: usize,
    pub config: ModelConfig,
    pub val_ap: f64,
    pub outcome: TrainOutcome,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    /// Best first.
    pub ranked: Vec<Trial>,
}

impl SearchOutcome {
    pub fn best(&self) -> &Trial {
        &self.ranked[0]
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        let list = |v: &[usize]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        writeln!(
            w,
            "rank\ttrial\tval_ap\tparameters\tlearning_rate\tbatch_size\tshared_layers\tfinal_layers"
        )?;
        for (rank, t) in self.ranked.iter().enumerate() {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                rank + 1,
                t.index,
                t.val_ap,
                t.config.parameter_count(),
                t.config.learning_rate,
                t.config.batch_size,
                list(&t.config.shared_layers),
                list(&t.config.final_layers),
            )?;
        }
        Ok(())
    }
}

/// Trains every sampled configuration for a reduced step budget and ranks
/// by validation AP, then fewer parameters, then lower trial index.
pub fn random_search(
    space: &SearchSpace,
    base: &ModelConfig,
    train_pool: &ShardPool,
    validation_pool: &ShardPool,
    stats: &NormalizationStats,
    out_dir: Option<&Path>,
) -> Result<SearchOutcome, TrainError> {
    let configs = space.sample_configs(base)?;
    let mut trials = configs
        .into_par_iter()
        .enumerate()
        .map(|(index, config)| {
            let run = TrainRunConfig {
                model: config.clone(),
                max_steps: space.steps_per_trial,
                validation_interval: space.validation_interval,
                checkpoint_dir: out_dir.map(|d| d.join(format!("trial-{index:03}"))),
            };
            let outcome = train(&run, train_pool, validation_pool, stats)?;
            Ok(Trial {
                index,
                val_ap: outcome.best_val_ap.unwrap_or(f64::NEG_INFINITY),
                config,
                outcome,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    trials.sort_by(|a, b| {
        b.val_ap
            .total_cmp(&a.val_ap)
            .then(a.config.parameter_count().cmp(&b.config.parameter_count()))
            .then(a.index.cmp(&b.index))
    });
    let outcome = SearchOutcome { ranked: trials };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(File::create(dir.join(TRIALS_FILE))?);
        outcome.write_table(&mut w)?;
        w.flush()?;
    }
    Ok(outcome)
}
