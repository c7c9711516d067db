//! Run metrics: the normalized suboptimality gap and a grid-decimated
//! recorder that samples gap and consensus residual while a simulation runs.

use std::fmt;

use aggsim_core::engine::{EventView, SimObserver};
use aggsim_core::game::ActionVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricError {
    ZeroReference,
    DimensionMismatch,
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::ZeroReference => write!(f, "reference profile has zero norm"),
            MetricError::DimensionMismatch => write!(f, "profiles have different shapes"),
        }
    }
}

impl std::error::Error for MetricError {}

/// Normalized suboptimality gap `|x - x*|_inf / |x*|_inf`.
pub fn gap_metric(x: &ActionVector, reference: &ActionVector) -> Result<f64, MetricError> {
    if x.players() != reference.players() || x.block_len() != reference.block_len() {
        return Err(MetricError::DimensionMismatch);
    }
    let denom = reference
        .as_slice()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if denom == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    Ok(x.inf_dist(reference) / denom)
}

/// One sampled row of a run curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRow {
    pub time_us: u64,
    /// Number of processed global events (0 is the initial state).
    pub events: u64,
    pub gap: f64,
    pub consensus_residual: f64,
}

/// Observer that records at most one row per grid cell (the first event at
/// or past each grid boundary), keeping run memory independent of the event
/// count.
pub struct GridRecorder {
    reference: ActionVector,
    reference_norm: f64,
    grid_step_us: u64,
    next_grid_us: u64,
    pub rows: Vec<MetricRow>,
}

impl GridRecorder {
    pub fn new(reference: ActionVector, horizon_us: u64, grid_points: usize) -> Self {
        let reference_norm = reference
            .as_slice()
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(reference_norm > 0.0, "zero reference profile");
        let grid_step_us = (horizon_us / grid_points as u64).max(1);
        Self {
            reference,
            reference_norm,
            grid_step_us,
            next_grid_us: 0,
            rows: Vec::with_capacity(grid_points + 2),
        }
    }

    fn residual(view: &EventView<'_>) -> f64 {
        let mut worst = 0.0f64;
        for (mass, weight) in view.masses.iter().zip(view.weights) {
            let mut d = 0.0;
            for (m, target) in mass.iter().zip(view.pre_mean) {
                let diff = m / weight - target;
                d += diff * diff;
            }
            worst = worst.max(d.sqrt());
        }
        worst
    }
}

impl SimObserver for GridRecorder {
    fn on_event(&mut self, view: &EventView<'_>) {
        if view.time_us < self.next_grid_us {
            return;
        }
        let gap = view.actions.inf_dist(&self.reference) / self.reference_norm;
        self.rows.push(MetricRow {
            time_us: view.time_us,
            events: view.index as u64 + 1,
            gap,
            consensus_residual: Self::residual(view),
        });
        self.next_grid_us = view.time_us - view.time_us % self.grid_step_us + self.grid_step_us;
    }
}

/// Piecewise-linear evaluation of a run curve on an arbitrary time, holding
/// the last value beyond the final sample.
pub fn interpolate(rows: &[MetricRow], time_us: u64, value: impl Fn(&MetricRow) -> f64) -> f64 {
    debug_assert!(!rows.is_empty());
    if time_us <= rows[0].time_us {
        return value(&rows[0]);
    }
    match rows.binary_search_by_key(&time_us, |r| r.time_us) {
        Ok(i) => value(&rows[i]),
        Err(i) => {
            if i >= rows.len() {
                value(&rows[rows.len() - 1])
            } else {
                let (a, b) = (&rows[i - 1], &rows[i]);
                let span = (b.time_us - a.time_us) as f64;
                let t = (time_us - a.time_us) as f64 / span;
                value(a) * (1.0 - t) + value(b) * t
            }
        }
    }
}
