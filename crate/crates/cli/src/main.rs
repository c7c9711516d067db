use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use aggsim::campaign;
use aggsim::config::ExperimentConfig;
use aggsim::verify::verify_file;

/// Monte-Carlo experiment driver for asynchronous aggregative-game
/// simulations.
#[derive(Parser, Debug)]
#[command(name = "aggsim", version, about)]
struct Args {
    /// Experiment configuration file (key = value lines).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Repeatable KEY=VALUE override applied on top of the config file.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Verify a stored trace file instead of running a campaign.
    #[arg(long, value_name = "TRACE")]
    verify: Option<PathBuf>,

    /// Output directory (overrides the config's `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Concurrent runs (overrides the config's `workers`).
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
}

fn run(args: Args) -> Result<bool> {
    if let Some(trace) = &args.verify {
        let outcome = verify_file(trace)?;
        print!("{}", outcome.report);
        return Ok(outcome.passed);
    }

    let config_path = args
        .config
        .as_ref()
        .context("--config PATH is required unless --verify is given")?;
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    cfg.apply_overrides(&args.overrides)?;
    if let Some(out) = args.out {
        cfg.out = out;
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    cfg.validate()?;

    let cell = campaign::run_campaign(&cfg)?;
    println!(
        "{} runs ({} failed), final mean gap {:.6e}",
        cfg.runs,
        cell.failed_runs,
        cell.final_mean_gap()
    );
    for threshold in [1e-2, 1e-3] {
        match cell.crossing_time_us(threshold) {
            Some(t) => println!("mean gap crossed {threshold:.0e} at t = {t} us"),
            None => println!("mean gap did not cross {threshold:.0e}"),
        }
    }
    println!("outputs in {}", cfg.out.display());
    Ok(cell.failed_runs == 0)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
