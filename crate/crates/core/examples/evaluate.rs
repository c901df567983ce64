//! Trains briefly, then evaluates on the held-out matches: operating points,
//! precision-recall curve, time-to-death bins, health correlation and the
//! timeline of one match.
//!
//!     cargo run --release --example evaluate -- 3000

use std::error::Error;
use std::io::{self, Write};

use death_forecast::dataset::{build_dataset, DatasetConfig, Split};
use death_forecast::eval::{
    classify_mispredictions, health_correlation, pooled, score_matches, time_to_death_distribution,
    EvalReport, PredictionTimeline,
};
use death_forecast::features::SchemaVariant;
use death_forecast::model::ModelConfig;
use death_forecast::synth::{SynthConfig, SynthSource};
use death_forecast::train::{train, TrainRunConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let steps: u64 = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 3000,
    };
    let cfg = SynthConfig { match_count: 60, frames: 2000, ..SynthConfig::default() };
    let source = SynthSource::new(cfg.clone())?;
    let dir = tempfile::tempdir()?;
    let manifest = build_dataset(&source, &DatasetConfig::default(), cfg.roster_size, dir.path())?;
    let run = TrainRunConfig {
        max_steps: steps,
        validation_interval: 1000.min(steps.max(1)),
        ..TrainRunConfig::new(ModelConfig::for_variant(SchemaVariant::Minimal))
    };
    let out = train(
        &run,
        &manifest.load_pool(dir.path(), Split::Train)?,
        &manifest.load_pool(dir.path(), Split::Validation)?,
        &manifest.load_norm_stats(dir.path())?,
    )?;

    let test = manifest.split.ids(Split::Test);
    let scores = score_matches(&out.best, &source, test, 4)?;
    let (s, l) = pooled(&scores);
    let report = EvalReport::from_scores(&s, &l, &[0.5, 0.7, 0.9])?;
    let mut stdout = io::stdout().lock();
    report.write_summary(&mut stdout)?;
    let (rho, p) = health_correlation(&scores)?;
    writeln!(stdout, "health_spearman\t{rho:.4}\tp={p:.3e}")?;

    writeln!(stdout, "\nprecision-recall, every 10th point")?;
    for pt in report.curve.points.iter().step_by(10).take(15) {
        writeln!(stdout, "  threshold {:.3}  recall {:.3}  precision {:.3}", pt.threshold, pt.recall, pt.precision)?;
    }

    writeln!(stdout, "\nprobability by seconds until the next death")?;
    time_to_death_distribution(&scores, 20.0).write_table(&mut stdout)?;

    let first = &scores[0];
    let timeline = PredictionTimeline::from_scores(first, 0.5);
    let errors = classify_mispredictions(&timeline, &first.labels, 0.5, 5.0, 20.0)?;
    writeln!(stdout, "\n{}: {errors:?}", timeline.match_id)?;
    let path = dir.path().join("timeline.tsv");
    timeline.write_table(std::fs::File::create(&path)?)?;
    let slot = (0..10).max_by_key(|&s| timeline.deaths[s].len()).unwrap_or(0);
    writeln!(stdout, "slot {slot} deaths at {:?}", timeline.deaths[slot])?;
    for (t, prob) in timeline.series(slot).iter().step_by(75) {
        writeln!(stdout, "  t={t:>6.1}s  {prob:.3}  {}", "#".repeat((prob * 40.0) as usize))?;
    }
    Ok(())
}
