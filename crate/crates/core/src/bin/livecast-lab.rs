use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use livecast_lab::harness::{self, ExperimentConfig};
use livecast_lab::Error;

#[derive(Parser)]
#[command(version, about = "Trace-driven lab for live video over LEO satellite uplinks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic network trace.
    GenNet,
    /// Draw a synthetic VBR video trace and its CBR variant.
    GenVideo,
    /// Label reallocation and anomaly seconds of a network trace.
    Label,
    /// Fit the bimodal predictor on a training trace.
    FitPredictor,
    /// Run every configured controller on every seed.
    Run,
    /// Time the horizon scheduler.
    Bench,
}

fn execute(cli: Cli) -> livecast_lab::Result<()> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.unwrap_or(config.seeds[0]);
    let out = cli.out.as_path();
    match cli.command {
        Command::GenNet => println!("{}", harness::cmd_gen_net(&config, seed, out)?.display()),
        Command::GenVideo => {
            for p in harness::cmd_gen_video(&config, seed, out)? {
                println!("{}", p.display());
            }
        }
        Command::Label => println!("{}", harness::cmd_label(&config, seed, out)?.display()),
        Command::FitPredictor => {
            let (path, model) = harness::cmd_fit_predictor(&config, seed, out)?;
            println!(
                "{} (p_anomaly reallocation {:.4}, other {:.4}{})",
                path.display(),
                model.p_anomaly_reallocation,
                model.p_anomaly_normal,
                if model.pooled { ", pooled histograms" } else { "" }
            );
        }
        Command::Run => {
            if let Some(s) = cli.seed {
                config.seeds = vec![s];
            }
            let summary = harness::cmd_run(&config, out)?;
            println!(
                "{:<12} {:>9} {:>8} {:>9} {:>9} {:>7}",
                "controller", "psnr_db", "fps", "recovery", "utility", "stalls"
            );
            for c in &summary.controllers {
                println!(
                    "{:<12} {:>9.3} {:>8.2} {:>9.4} {:>9.4} {:>7}",
                    c.controller.name(),
                    c.mean_psnr_db,
                    c.mean_fps,
                    c.recovery_ratio,
                    c.parity_utility,
                    c.stalls
                );
            }
        }
        Command::Bench => {
            let stats = harness::cmd_bench(&config, seed, out)?;
            println!(
                "horizon {}: median {:.3} ms, std {:.3} ms over {} calls",
                stats.horizon, stats.median_ms, stats.std_ms, stats.calls
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
