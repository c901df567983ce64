//! Precision-recall evaluation, rank correlation, time-to-death
//! distributions, per-match timelines and misprediction categories.

use std::io::{self, Write};

use ndarray::Array2;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::dataset::{prepare_match, DatasetError, Labels, MatchSource};
use crate::features::{normalize, FeatureError};
use crate::match_data::{MatchRecord, HERO_COUNT};
use crate::model::{predict, Checkpoint, ModelError};

pub const DEFAULT_THRESHOLD: f64 = 0.9;
pub const DEFAULT_HORIZON_SECONDS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no positive labels")]
    NoPositives,
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("input is constant")]
    ConstantInput,
    #[error("need at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("match {0} belongs to the training or validation split")]
    SplitLeak(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

/// One point per distinct score, thresholds strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub positives: usize,
    pub total: usize,
}

impl PrCurve {
    pub fn positive_rate(&self) -> f64 {
        self.positives as f64 / self.total as f64
    }

    /// `recall<TAB>precision` table with a header row.
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "threshold\trecall\tprecision")?;
        for p in &self.points {
            writeln!(w, "{}\t{}\t{}", p.threshold, p.recall, p.precision)?;
        }
        Ok(())
    }
}

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<usize, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(EvalError::NoPositives);
    }
    Ok(positives)
}

pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve, EvalError> {
    let positives = check_lengths(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / positives as f64,
        });
    }
    Ok(PrCurve {
        points,
        positives,
        total: scores.len(),
    })
}

/// Step-wise area: `sum (R_i - R_{i-1}) * P_i` over descending thresholds.
pub fn average_precision(curve: &PrCurve) -> f64 {
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for p in &curve.points {
        ap += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    ap
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdMetrics {
    pub threshold: f64,
    /// `None` when nothing scores at or above the threshold.
    pub precision: Option<f64>,
    pub recall: f64,
    pub predicted_positive: usize,
}

/// Precision and recall when predicting positive iff `score >= threshold`.
pub fn threshold_metrics(
    scores: &[f64],
    labels: &[bool],
    threshold: f64,
) -> Result<ThresholdMetrics, EvalError> {
    let positives = check_lengths(scores, labels)?;
    let (mut tp, mut predicted) = (0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        if s >= threshold {
            predicted += 1;
            if l {
                tp += 1;
            }
        }
    }
    Ok(ThresholdMetrics {
        threshold,
        precision: (predicted > 0).then(|| tp as f64 / predicted as f64),
        recall: tp as f64 / positives as f64,
        predicted_positive: predicted,
    })
}

/// 1-based ranks, ties get the mean of the ranks they span.
pub fn fractional_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::ConstantInput);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho with a two-sided p-value from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), EvalError> {
    if x.len() != y.len() {
        return Err(EvalError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(EvalError::TooFewPoints(x.len()));
    }
    let rho = pearson(&fractional_ranks(x), &fractional_ranks(y))?;
    let df = (x.len() - 2) as f64;
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok((rho, p))
}

/// Model output for every sampled frame of one match.
#[derive(Debug, Clone)]
pub struct MatchScores {
    pub match_id: String,
    pub game_times: Vec<f64>,
    pub probabilities: Vec<[f64; HERO_COUNT]>,
    pub labels: Vec<Labels>,
    /// Raw hero health per sample, for correlation checks.
    pub health: Vec<[f64; HERO_COUNT]>,
    pub deaths: [Vec<f64>; HERO_COUNT],
}

/// Extract, normalize and score every sampled frame of `m`.
pub fn score_match(
    ck: &Checkpoint,
    m: &MatchRecord,
    period_ticks: u64,
) -> Result<MatchScores, EvalError> {
    let schema = crate::features::FeatureSchema::with_roster(ck.config.variant, ck.config.roster_size);
    let prepared = prepare_match(m, &schema, ck.config.window_seconds, period_ticks)?;
    let health_col = schema.names().position(|n| n == "state.Health");
    let n = prepared.frames.len();
    let width = schema.frame_width();
    let mut data = Vec::with_capacity(n * width);
    let mut health = Vec::with_capacity(n);
    for f in &prepared.frames {
        let normed = normalize(f, &ck.stats)?;
        data.extend(normed.values().iter().map(|&v| v as f32));
        health.push(std::array::from_fn(|s| {
            health_col.map(|c| f.hero(s)[c]).unwrap_or(f64::NAN)
        }));
    }
    let x = Array2::from_shape_vec((n, width), data).expect("consistent widths");
    let probs = predict(&ck.params, x.view())?;
    let probabilities = probs
        .rows()
        .into_iter()
        .map(|r| std::array::from_fn(|s| r[s] as f64))
        .collect();
    Ok(MatchScores {
        match_id: m.match_id.clone(),
        game_times: prepared.frames.iter().map(|f| f.game_time).collect(),
        probabilities,
        labels: prepared.labels,
        health,
        deaths: m.deaths_by_slot(),
    })
}

/// Scores matches in parallel; output follows `ids` order.
pub fn score_matches(
    ck: &Checkpoint,
    source: &dyn MatchSource,
    ids: &[String],
    period_ticks: u64,
) -> Result<Vec<MatchScores>, EvalError> {
    ids.par_iter()
        .map(|id| {
            let m = source.load(id)?;
            score_match(ck, &m, period_ticks)
        })
        .collect()
}

/// Flattens (score, label) pairs over all samples and heroes.
pub fn pooled(scores: &[MatchScores]) -> (Vec<f64>, Vec<bool>) {
    let mut s = Vec::new();
    let mut l = Vec::new();
    for m in scores {
        for (p, y) in m.probabilities.iter().zip(&m.labels) {
            s.extend_from_slice(p);
            l.extend_from_slice(y);
        }
    }
    (s, l)
}

/// Spearman correlation between hero health and predicted probability,
/// pooled over every sample and hero.
pub fn health_correlation(scores: &[MatchScores]) -> Result<(f64, f64), EvalError> {
    let mut health = Vec::new();
    let mut probs = Vec::new();
    for m in scores {
        for (h, p) in m.health.iter().zip(&m.probabilities) {
            health.extend_from_slice(h);
            probs.extend_from_slice(p);
        }
    }
    spearman(&health, &probs)
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub average_precision: f64,
    pub operating_points: Vec<ThresholdMetrics>,
    pub positive_rate: f64,
    pub sample_count: usize,
    pub positives: usize,
    pub curve: PrCurve,
}

impl EvalReport {
    pub fn from_scores(scores: &[f64], labels: &[bool], thresholds: &[f64]) -> Result<Self, EvalError> {
        let curve = pr_curve(scores, labels)?;
        let operating_points = thresholds
            .iter()
            .map(|&t| threshold_metrics(scores, labels, t))
            .collect::<Result<_, _>>()?;
        Ok(EvalReport {
            average_precision: average_precision(&curve),
            operating_points,
            positive_rate: curve.positive_rate(),
            sample_count: curve.total,
            positives: curve.positives,
            curve,
        })
    }

    /// Key-value summary, one `key<TAB>value` per line.
    pub fn write_summary<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "average_precision\t{}", self.average_precision)?;
        writeln!(w, "positive_rate\t{}", self.positive_rate)?;
        writeln!(w, "sample_count\t{}", self.sample_count)?;
        writeln!(w, "positives\t{}", self.positives)?;
        for op in &self.operating_points {
            let precision = op
                .precision
                .map(|p| p.to_string())
                .unwrap_or_else(|| "undefined".into());
            writeln!(w, "threshold.{}.precision\t{precision}", op.threshold)?;
            writeln!(w, "threshold.{}.recall\t{}", op.threshold, op.recall)?;
            writeln!(w, "threshold.{}.predicted_positive\t{}", op.threshold, op.predicted_positive)?;
        }
        Ok(())
    }
}

/// Scores the unbalanced test matches and reports AP and operating points.
pub fn evaluate_test(
    ck: &Checkpoint,
    source: &dyn MatchSource,
    test_ids: &[String],
    period_ticks: u64,
    thresholds: &[f64],
) -> Result<EvalReport, EvalError> {
    let scores = score_matches(ck, source, test_ids, period_ticks)?;
    let (s, l) = pooled(&scores);
    EvalReport::from_scores(&s, &l, thresholds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinSummary {
    /// `"0"` covers time-to-death in (0, 1] s, `"1"` (1, 2] s, ...; `"none"` has no death within the horizon.
    pub label: String,
    pub count: usize,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeToDeathDistribution {
    pub horizon: f64,
    pub bins: Vec<BinSummary>,
}

impl TimeToDeathDistribution {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin\tq25\tmedian\tq75\tcount")?;
        for b in &self.bins {
            writeln!(w, "{}\t{}\t{}\t{}\t{}", b.label, b.q25, b.median, b.q75, b.count)?;
        }
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data; NaN when empty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Time from `t` to the slot's next death, if any.
pub fn time_to_next_death(deaths: &[f64], t: f64) -> Option<f64> {
    let i = deaths.partition_point(|&tau| tau <= t);
    deaths.get(i).map(|tau| tau - t)
}

pub fn time_to_death_distribution(scores: &[MatchScores], horizon: f64) -> TimeToDeathDistribution {
    let n_bins = horizon.ceil().max(1.0) as usize;
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n_bins + 1];
    for m in scores {
        for (&t, probs) in m.game_times.iter().zip(&m.probabilities) {
            for slot in 0..HERO_COUNT {
                let bin = match time_to_next_death(&m.deaths[slot], t) {
                    Some(d) if d <= horizon => ((d.ceil() as usize).max(1) - 1).min(n_bins - 1),
                    _ => n_bins,
                };
                buckets[bin].push(probs[slot]);
            }
        }
    }
    let bins = buckets
        .into_iter()
        .enumerate()
        .map(|(i, mut v)| {
            v.sort_by(f64::total_cmp);
            BinSummary {
                label: if i == n_bins { "none".into() } else { i.to_string() },
                count: v.len(),
                q25: quantile(&v, 0.25),
                median: quantile(&v, 0.5),
                q75: quantile(&v, 0.75),
            }
        })
        .collect();
    TimeToDeathDistribution { horizon, bins }
}

/// Per-hero probability series over one match.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTimeline {
    pub match_id: String,
    pub threshold: f64,
    pub game_times: Vec<f64>,
    pub probabilities: Vec<[f64; HERO_COUNT]>,
    pub deaths: [Vec<f64>; HERO_COUNT],
}

impl PredictionTimeline {
    pub fn from_scores(scores: &MatchScores, threshold: f64) -> Self {
        PredictionTimeline {
            match_id: scores.match_id.clone(),
            threshold,
            game_times: scores.game_times.clone(),
            probabilities: scores.probabilities.clone(),
            deaths: scores.deaths.clone(),
        }
    }

    pub fn series(&self, slot: usize) -> Vec<(f64, f64)> {
        self.game_times
            .iter()
            .zip(&self.probabilities)
            .map(|(&t, p)| (t, p[slot]))
            .collect()
    }

    /// Sample index carrying each death marker: the first sample at or after
    /// the death, or the last sample for deaths after it.
    pub fn death_markers(&self, slot: usize) -> Vec<usize> {
        if self.game_times.is_empty() {
            return Vec::new();
        }
        self.deaths[slot]
            .iter()
            .map(|&tau| {
                self.game_times
                    .partition_point(|&t| t < tau)
                    .min(self.game_times.len() - 1)
            })
            .collect()
    }

    /// `game_time<TAB>slot<TAB>probability<TAB>death_flag`, ordered by time then slot.
    pub fn write_table<W: Write>(&self, mut w: W) -> io::Result<()> {
        let markers: Vec<Vec<usize>> = (0..HERO_COUNT).map(|s| self.death_markers(s)).collect();
        writeln!(w, "# match\t{}\tthreshold\t{}", self.match_id, self.threshold)?;
        writeln!(w, "game_time\tslot\tprobability\tdeath_flag")?;
        for (i, (&t, p)) in self.game_times.iter().zip(&self.probabilities).enumerate() {
            for (slot, marks) in markers.iter().enumerate() {
                let flag = marks.iter().filter(|&&k| k == i).count();
                writeln!(w, "{t}\t{slot}\t{}\t{flag}", p[slot])?;
            }
        }
        Ok(())
    }
}

pub fn export_timeline(
    ck: &Checkpoint,
    m: &MatchRecord,
    period_ticks: u64,
    threshold: f64,
) -> Result<PredictionTimeline, EvalError> {
    let scores = score_match(ck, m, period_ticks)?;
    Ok(PredictionTimeline::from_scores(&scores, threshold))
}

/// Error categories: misses, alarms ahead of a later death, and all other alarms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MispredictionCounts {
    /// Death within the window that was not flagged.
    pub false_negatives: usize,
    /// Alarm where the hero dies after the window but within the near window.
    pub near_false_positives: usize,
    /// Any other alarm; telling dangerous from harmless situations apart needs human judgment.
    pub far_false_positives: usize,
}

impl MispredictionCounts {
    pub fn total(&self) -> usize {
        self.false_negatives + self.near_false_positives + self.far_false_positives
    }
}

pub fn classify_mispredictions(
    timeline: &PredictionTimeline,
    labels: &[Labels],
    threshold: f64,
    window: f64,
    near_window: f64,
) -> Result<MispredictionCounts, EvalError> {
    if labels.len() != timeline.game_times.len() {
        return Err(EvalError::LengthMismatch(timeline.game_times.len(), labels.len()));
    }
    let mut counts = MispredictionCounts::default();
    for ((&t, p), y) in timeline
        .game_times
        .iter()
        .zip(&timeline.probabilities)
        .zip(labels)
    {
        for slot in 0..HERO_COUNT {
            let alarm = p[slot] >= threshold;
            match (alarm, y[slot]) {
                (false, true) => counts.false_negatives += 1,
                (true, false) => match time_to_next_death(&timeline.deaths[slot], t) {
                    Some(d) if d > window && d <= near_window => counts.near_false_positives += 1,
                    _ => counts.far_false_positives += 1,
                },
                _ => {}
            }
        }
    }
    Ok(counts)
}
