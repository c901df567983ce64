//! Prints the per-hero feature layout of each schema and the features of one
//! synthetic frame, raw and normalized.
//!
//!     cargo run --example feature_schema -- medium

use std::error::Error;

use death_forecast::features::{compute_norm_stats, extract_frames, normalize, FeatureSchema, SchemaVariant};
use death_forecast::synth::{generate_match, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let variant: SchemaVariant = match std::env::args().nth(1) {
        Some(v) => v.parse()?,
        None => SchemaVariant::Minimal,
    };
    for v in SchemaVariant::ALL {
        let s = FeatureSchema::new(v);
        println!("{v:>8}: {:>3} features per hero, {:>4} per frame", s.per_hero_count(), s.frame_width());
    }

    let cfg = SynthConfig { frames: 600, ..SynthConfig::default() };
    let m = generate_match(&cfg, 1)?;
    let schema = FeatureSchema::with_roster(variant, m.roster_size);
    let indices: Vec<usize> = (0..m.frames.len()).collect();
    let frames = extract_frames(&m, &indices, &schema)?;
    let stats = compute_norm_stats(variant, frames.iter())?;
    let last = frames.last().expect("match has frames");
    let scaled = normalize(last, &stats)?;

    println!("\nslot 0 at t={:.1}s ({variant})", last.game_time);
    for (k, name) in schema.names().enumerate() {
        println!("{k:>4}  {name:<40} {:>12.3} {:>8.3}", last.hero(0)[k], scaled.hero(0)[k]);
    }
    Ok(())
}
