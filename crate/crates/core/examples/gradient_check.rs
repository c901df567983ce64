//! Compares backpropagated gradients with central differences.

use std::error::Error;

use death_forecast::model::{gradient_check, gradient_check_config};

fn main() -> Result<(), Box<dyn Error>> {
    let cfg = gradient_check_config();
    println!("encoder {:?}, head {:?}, {} parameters", cfg.shared_layers, cfg.final_layers, cfg.parameter_count());
    for seed in 0..10 {
        let r = gradient_check(&cfg, 4, 1e-4, seed)?;
        println!(
            "seed {seed}: max relative error {:.2e} at parameter {} -> {}",
            r.max_relative_error,
            r.worst_index,
            if r.passed { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
