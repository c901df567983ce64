//! Reads a match file (or generates one), validates it and prints a summary.
//!
//!     cargo run --example inspect_match -- path/to/match.jsonl.gz

use std::error::Error;

use death_forecast::match_data::{read_match_file, strip_pauses, summarize_violations, validate_match};
use death_forecast::synth::{generate_match, SynthConfig};

fn main() -> Result<(), Box<dyn Error>> {
    let m = match std::env::args().nth(1) {
        Some(path) => read_match_file(path)?,
        None => {
            let cfg = SynthConfig { frames: 900, pause_probability: 0.01, pause_frames: 20, ..SynthConfig::default() };
            generate_match(&cfg, 42)?
        }
    };
    let violations = validate_match(&m);
    println!("match {}", m.match_id);
    println!("  frames         {}", m.frames.len());
    println!("  paused frames  {}", m.frames.iter().filter(|f| f.paused).count());
    let (first, last) = (m.frames[0].game_time, m.frames[m.frames.len() - 1].game_time);
    println!("  game time      {first:.1}s .. {last:.1}s");
    println!("  roster size    {}", m.roster_size);
    println!("  hero ids       {:?}", m.hero_ids());
    for (slot, times) in m.deaths_by_slot().iter().enumerate() {
        let shown: Vec<String> = times.iter().map(|t| format!("{t:.1}")).collect();
        println!("  slot {slot} deaths  [{}]", shown.join(", "));
    }
    if violations.is_empty() {
        println!("  valid");
    } else {
        for (kind, n) in summarize_violations(&violations) {
            println!("  {n} x {kind}");
        }
    }
    let clean = strip_pauses(&m)?;
    println!("  {} frames after dropping pauses", clean.frames.len());
    Ok(())
}
