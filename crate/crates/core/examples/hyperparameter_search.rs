//! Random search over architecture, learning rate and batch size on a small
//! synthetic dataset.
//!
//!     cargo run --release --example hyperparameter_search -- 8 500

use std::error::Error;

use death_forecast::dataset::{build_dataset, DatasetConfig, Split};
use death_forecast::features::SchemaVariant;
use death_forecast::model::ModelConfig;
use death_forecast::synth::{SynthConfig, SynthSource};
use death_forecast::train::{random_search, SearchSpace};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let budget: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(8);
    let steps: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(500);

    let cfg = SynthConfig { match_count: 40, frames: 2000, ..SynthConfig::default() };
    let source = SynthSource::new(cfg.clone())?;
    let dir = tempfile::tempdir()?;
    let manifest = build_dataset(&source, &DatasetConfig::default(), cfg.roster_size, dir.path())?;
    let space = SearchSpace {
        budget,
        steps_per_trial: steps,
        validation_interval: (steps / 4).max(1),
        ..SearchSpace::default()
    };
    let outcome = random_search(
        &space,
        &ModelConfig::for_variant(SchemaVariant::Minimal),
        &manifest.load_pool(dir.path(), Split::Train)?,
        &manifest.load_pool(dir.path(), Split::Validation)?,
        &manifest.load_norm_stats(dir.path())?,
        Some(dir.path()),
    )?;
    outcome.write_table(std::io::stdout().lock())?;
    let best = outcome.best();
    println!("best: trial {} with {} parameters", best.index, best.config.parameter_count());
    Ok(())
}
