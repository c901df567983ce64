//! Trains the minimal network on the default synthetic corpus and compares the
//! test average precision with the exact hazard oracle.
//!
//!     cargo run --release --example train_synthetic -- 20000

use std::error::Error;
use std::time::Instant;

use death_forecast::dataset::{build_dataset, DatasetConfig, MatchSource, Split};
use death_forecast::eval::evaluate_test;
use death_forecast::features::SchemaVariant;
use death_forecast::model::ModelConfig;
use death_forecast::synth::{bayes_ap, SynthConfig, SynthSource};
use death_forecast::train::{train, TrainRunConfig};

fn main() -> Result<(), Box<dyn Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let steps: u64 = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 20_000,
    };
    let t0 = Instant::now();
    let cfg = SynthConfig::default();
    let source = SynthSource::new(cfg.clone())?;
    let dir = tempfile::tempdir()?;
    let manifest = build_dataset(&source, &DatasetConfig::default(), cfg.roster_size, dir.path())?;
    let train_pool = manifest.load_pool(dir.path(), Split::Train)?;
    let val_pool = manifest.load_pool(dir.path(), Split::Validation)?;
    let stats = manifest.load_norm_stats(dir.path())?;
    println!("{} train / {} validation samples after {:.0?}", train_pool.len(), val_pool.len(), t0.elapsed());

    let run = TrainRunConfig {
        max_steps: steps,
        validation_interval: 2000.min(steps.max(1)),
        ..TrainRunConfig::new(ModelConfig::for_variant(SchemaVariant::Minimal))
    };
    let out = train(&run, &train_pool, &val_pool, &stats)?;
    for r in &out.log.rows {
        println!("step {:>6}  loss {:.4}  val AP {:.4}", r.step, r.train_loss, r.val_ap);
    }

    let test = manifest.split.ids(Split::Test).to_vec();
    let report = evaluate_test(&out.best, &source, &test, 4, &[0.5, 0.9])?;
    let matches = test.iter().map(|id| source.load(id)).collect::<Result<Vec<_>, _>>()?;
    let oracle = bayes_ap(&cfg, &matches, 5.0, 4)?;
    println!("test AP {:.4}  oracle AP {oracle:.4}  positive rate {:.4}", report.average_precision, report.positive_rate);
    println!("done in {:.0?}", t0.elapsed());
    Ok(())
}
