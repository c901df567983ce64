//! Generates a synthetic corpus and reports how well the exact hazard oracle
//! and a current-state baseline separate deaths, plus the oracle's
//! calibration.
//!
//!     cargo run --release --example synth_oracle -- 40

use std::error::Error;

use death_forecast::eval::{average_precision, pr_curve};
use death_forecast::synth::{alive_hazards, bayes_scores, generate_corpus, SynthConfig};
use death_forecast::match_data::strip_pauses;
use death_forecast::dataset::downsample;

fn main() -> Result<(), Box<dyn Error>> {
    let count: usize = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => 25,
    };
    let cfg = SynthConfig { match_count: count, ..SynthConfig::default() };
    println!("{}", cfg.to_toml());
    let matches = generate_corpus(&cfg)?;
    let deaths: usize = matches.iter().map(|m| m.deaths.len()).sum();
    let minutes = cfg.frames as f64 * cfg.step_seconds() / 60.0;
    println!("{deaths} deaths, {:.3} per hero-minute", deaths as f64 / (count as f64 * 10.0 * minutes));

    let (mut oracle, mut baseline, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for m in &matches {
        let (p, l) = bayes_scores(&cfg, m, 5.0, 4)?;
        oracle.extend(p);
        labels.extend(l);
        // hazard of the current frame held for the whole window
        let clean = strip_pauses(m)?;
        let steps = (5.0 / cfg.step_seconds()).round() as i32;
        let hazards: Vec<Vec<f64>> = (0..10).map(|s| alive_hazards(&cfg, &clean, s)).collect();
        for i in downsample(&clean, 4) {
            for (s, h) in hazards.iter().enumerate() {
                let alive = clean.frames[i].by_slot()[s].alive;
                baseline.push(if alive { 1.0 - (1.0 - h[i]).powi(steps * cfg.ticks_per_frame as i32) } else { 0.0 });
            }
        }
    }
    let rate = labels.iter().filter(|&&l| l).count() as f64 / labels.len() as f64;
    println!("positive rate     {rate:.4}");
    println!("oracle AP         {:.4}", average_precision(&pr_curve(&oracle, &labels)?));
    println!("current-state AP  {:.4}", average_precision(&pr_curve(&baseline, &labels)?));

    println!("\ncalibration (predicted vs observed)");
    let mut pairs: Vec<(f64, bool)> = oracle.into_iter().zip(labels).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for bin in pairs.chunks(pairs.len().div_ceil(10)) {
        let mean = bin.iter().map(|p| p.0).sum::<f64>() / bin.len() as f64;
        let seen = bin.iter().filter(|p| p.1).count() as f64 / bin.len() as f64;
        println!("  {mean:.4}  {seen:.4}");
    }
    Ok(())
}
