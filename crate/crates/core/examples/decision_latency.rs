//! Times the horizon scheduler at the default grids.

use livecast_lab::harness::{bench_decision, ExperimentConfig};

fn main() -> livecast_lab::Result<()> {
    let config = ExperimentConfig::default();
    for horizon in [1, 3, 5, 10] {
        let s = bench_decision(&config, 1, horizon, 300)?;
        println!(
            "horizon {horizon:>2}: median {:.3} ms, std {:.3} ms, {:.0} atoms per step",
            s.median_ms, s.std_ms, s.mean_atoms_per_step
        );
    }
    Ok(())
}
