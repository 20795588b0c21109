//! Runs every controller on two seeds of ten simulated minutes and prints the
//! summary table.

use livecast_lab::harness::{run_suite, ExperimentConfig, Summary};

fn main() -> livecast_lab::Result<()> {
    let config = ExperimentConfig {
        duration_s: 600,
        seeds: vec![1, 2],
        ..ExperimentConfig::default()
    };
    let runs = run_suite(&config)?;
    let summary = Summary::from_runs(&config, &runs);
    println!(
        "{:<12} {:>8} {:>7} {:>9} {:>8} {:>7}",
        "controller", "psnr", "fps", "recovery", "utility", "stalls"
    );
    for c in &summary.controllers {
        println!(
            "{:<12} {:>8.3} {:>7.2} {:>9.4} {:>8.4} {:>7}",
            c.controller.name(),
            c.mean_psnr_db,
            c.mean_fps,
            c.recovery_ratio,
            c.parity_utility,
            c.stalls
        );
    }
    Ok(())
}
