//! Monte-Carlo campaign driver: solves the reference equilibrium once,
//! launches independent seeded runs across a worker pool, and aggregates the
//! per-run curves on a common time grid by linear interpolation.
//!
//! All outputs are deterministic functions of the configuration: runs are
//! keyed by run id, aggregation happens in id order after every run has
//! finished, and numbers are printed with twelve significant digits.

use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, Context, Result};

use aggsim_core::cournot::{generate_instance, solve_ne, CournotGame};
use aggsim_core::engine::{run_simulation_observed, EventTrace, SimConfig};
use aggsim_core::game::ActionVector;
use aggsim_core::rng::run_seed;
use aggsim_core::topology::Digraph;

use crate::config::ExperimentConfig;
use crate::metrics::{gap_metric, interpolate, GridRecorder, MetricRow};
use crate::tracefile;

/// One finished run.
pub struct RunOutcome {
    pub run_id: usize,
    pub seed: u64,
    pub result: Result<Vec<MetricRow>, String>,
    /// Full trace, kept only when trace dumping is on.
    pub trace: Option<EventTrace>,
}

/// In-memory result of a campaign cell.
pub struct CellResult {
    pub reference: ActionVector,
    pub runs: Vec<RunOutcome>,
    /// `(time_us, mean gap, mean consensus residual)` on the common grid,
    /// averaged over successful runs.
    pub aggregate: Vec<(u64, f64, f64)>,
    pub failed_runs: usize,
}

impl CellResult {
    /// First grid time at which the mean gap reaches `threshold`.
    pub fn crossing_time_us(&self, threshold: f64) -> Option<u64> {
        self.aggregate
            .iter()
            .find(|(_, gap, _)| *gap <= threshold)
            .map(|(t, _, _)| *t)
    }

    pub fn final_mean_gap(&self) -> f64 {
        self.aggregate
            .last()
            .map(|(_, g, _)| *g)
            .unwrap_or(f64::NAN)
    }
}

/// Runs every Monte-Carlo repetition of a configuration and aggregates.
pub fn run_cell(cfg: &ExperimentConfig) -> Result<CellResult> {
    cfg.validate().map_err(|e| anyhow!("{e}"))?;
    let game = CournotGame::new(generate_instance(
        cfg.players,
        cfg.markets,
        cfg.instance_seed,
    ));
    let graph = Digraph::generate(cfg.topology, cfg.players).map_err(|e| anyhow!("{e}"))?;
    let reference = solve_ne(&game, cfg.ne_tol, cfg.instance_seed)
        .map_err(|e| anyhow!("reference equilibrium solve failed: {e}"))?;
    let timing = cfg.timing_model();
    let horizon_us = cfg.horizon_us();

    let outcomes: Mutex<Vec<Option<RunOutcome>>> =
        Mutex::new((0..cfg.runs).map(|_| None).collect());
    let next_run = AtomicUsize::new(0);
    let workers = cfg.workers.min(cfg.runs);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let run_id = next_run.fetch_add(1, Ordering::Relaxed);
                if run_id >= cfg.runs {
                    break;
                }
                let seed = run_seed(cfg.base_seed, run_id as u64);
                let mut sim_cfg = SimConfig::new(cfg.scheme, cfg.rho, horizon_us, seed);
                sim_cfg.frozen_actions = cfg.frozen;
                sim_cfg.record_full = cfg.dump_traces;
                let mut recorder =
                    GridRecorder::new(reference.clone(), horizon_us, cfg.grid_points);
                let outcome = match run_simulation_observed(
                    &game,
                    &graph,
                    &timing,
                    &sim_cfg,
                    &mut recorder,
                ) {
                    Ok(trace) => {
                        let mut rows = recorder.rows;
                        rows.insert(0, initial_row(&trace, &reference));
                        RunOutcome {
                            run_id,
                            seed,
                            result: Ok(rows),
                            trace: cfg.dump_traces.then_some(trace),
                        }
                    }
                    Err(e) => RunOutcome {
                        run_id,
                        seed,
                        result: Err(e.to_string()),
                        trace: None,
                    },
                };
                outcomes.lock().expect("poisoned")[run_id] = Some(outcome);
            });
        }
    });

    let runs: Vec<RunOutcome> = outcomes
        .into_inner()
        .expect("poisoned")
        .into_iter()
        .map(|o| o.expect("every run finished"))
        .collect();
    let failed_runs = runs.iter().filter(|r| r.result.is_err()).count();

    // Common grid, averaged over successful runs in id order.
    let step = (horizon_us / cfg.grid_points as u64).max(1);
    let mut aggregate = Vec::with_capacity(cfg.grid_points + 1);
    for j in 0..=cfg.grid_points {
        let t = (j as u64 * step).min(horizon_us);
        let mut gap_sum = 0.0;
        let mut res_sum = 0.0;
        let mut count = 0usize;
        for run in &runs {
            if let Ok(rows) = &run.result {
                gap_sum += interpolate(rows, t, |r| r.gap);
                res_sum += interpolate(rows, t, |r| r.consensus_residual);
                count += 1;
            }
        }
        if count > 0 {
            aggregate.push((t, gap_sum / count as f64, res_sum / count as f64));
        }
    }

    Ok(CellResult {
        reference,
        runs,
        aggregate,
        failed_runs,
    })
}

fn initial_row(trace: &EventTrace, reference: &ActionVector) -> MetricRow {
    // The t = 0 row: everyone's estimate is its own initial action.
    let mean = trace.init_actions.mean_block();
    let mut residual = 0.0f64;
    for i in 0..trace.players {
        let b = trace.init_actions.block(i);
        let mut d = 0.0;
        for (v, m) in b.iter().zip(&mean) {
            let diff = v - m;
            d += diff * diff;
        }
        residual = residual.max(d.sqrt());
    }
    MetricRow {
        time_us: 0,
        events: 0,
        gap: gap_metric(&trace.init_actions, reference).unwrap_or(f64::INFINITY),
        consensus_residual: residual,
    }
}

fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Writes per-run CSVs, the aggregate CSV and optional trace dumps into the
/// output directory. Returns the number of failed runs.
pub fn write_outputs(cfg: &ExperimentConfig, cell: &CellResult, dir: &Path) -> Result<usize> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for run in &cell.runs {
        let path = dir.join(format!("run_{:03}.csv", run.run_id));
        let mut text = String::from("run_id,sim_time_us,k,gap,consensus_residual\n");
        match &run.result {
            Ok(rows) => {
                for r in rows {
                    text.push_str(&format!(
                        "{},{},{},{},{}\n",
                        run.run_id,
                        r.time_us,
                        r.events,
                        fmt12(r.gap),
                        fmt12(r.consensus_residual)
                    ));
                }
            }
            Err(e) => {
                text.push_str(&format!("# run failed: {e}\n"));
            }
        }
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        if let Some(trace) = &run.trace {
            let tpath = dir.join(format!("trace_{:03}.txt", run.run_id));
            fs::write(&tpath, tracefile::trace_to_text(cfg, trace))
                .with_context(|| format!("writing {}", tpath.display()))?;
        }
    }
    let mut agg = String::from("sim_time_us,mean_gap,mean_consensus_residual\n");
    for (t, gap, res) in &cell.aggregate {
        agg.push_str(&format!("{},{},{}\n", t, fmt12(*gap), fmt12(*res)));
    }
    fs::write(dir.join("aggregate.csv"), agg).context("writing aggregate.csv")?;
    Ok(cell.failed_runs)
}

/// Full campaign entry point: runs the cell and writes all artifacts.
pub fn run_campaign(cfg: &ExperimentConfig) -> Result<CellResult> {
    let cell = run_cell(cfg)?;
    write_outputs(cfg, &cell, &cfg.out)?;
    Ok(cell)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_time_reads_the_grid() {
        let cell = CellResult {
            reference: ActionVector::zeros(1, 1),
            runs: Vec::new(),
            aggregate: vec![(0, 1.0, 0.0), (10, 0.5, 0.0), (20, 0.05, 0.0)],
            failed_runs: 0,
        };
        assert_eq!(cell.crossing_time_us(0.1), Some(20));
        assert_eq!(cell.crossing_time_us(0.6), Some(10));
        assert_eq!(cell.crossing_time_us(0.01), None);
    }
}
