//! Builds a sharded dataset from synthetic matches and draws balanced batches.
//!
//!     cargo run --release --example build_dataset -- /tmp/df-data

use std::error::Error;
use std::path::PathBuf;

use death_forecast::dataset::{build_dataset, sample_balanced_batch, DatasetConfig, DatasetManifest, Split};
use death_forecast::synth::{SynthConfig, SynthSource};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn Error>> {
    let scratch = tempfile::tempdir()?;
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| scratch.path().to_path_buf());
    let synth = SynthConfig { match_count: 30, frames: 1500, ..SynthConfig::default() };
    let source = SynthSource::new(synth.clone())?;

    build_dataset(&source, &DatasetConfig::default(), synth.roster_size, &out)?;
    let manifest = DatasetManifest::load(&out)?;
    for split in [Split::Train, Split::Validation, Split::Test] {
        println!("{:<10} {:>3} matches", split.as_str(), manifest.split.ids(split).len());
    }
    let pool = manifest.load_pool(&out, Split::Train)?;
    println!("train pool: {} samples in {} shards", pool.len(), pool.shards().len());
    for slot in 0..10 {
        let pos = pool.samples().filter(|s| s.labels[slot]).count();
        println!("  slot {slot}: {pos} positives");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..5 {
        let batch = sample_balanced_batch(&pool, 128, &mut rng)?;
        let pos = batch.samples.iter().filter(|s| s.labels[batch.selected_slot]).count();
        println!("batch on slot {}: {pos} positive, {} negative", batch.selected_slot, batch.samples.len() - pos);
    }
    println!("dataset written to {}", out.display());
    Ok(())
}
