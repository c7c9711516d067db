//! Centralized single-coordinate projected pseudo-gradient iteration with
//! controlled gradient perturbations.
//!
//! One player updates per iteration. Player `i` keeps an integer counter
//! `r_i` that advances by a configurable increment when it updates, and its
//! stepsize is the inclusive schedule sum over the counter interval it just
//! traversed — the same catch-up rule the asynchronous engine applies to its
//! update counters. The aggregate is the exact running block mean, so this
//! solver doubles as a reference semantics for the distributed iteration: a
//! multi-player event can be serialized into single-player steps whose
//! perturbations absorb both the stale aggregate estimate and the
//! within-event state drift, reproducing the event's outcome exactly.
//!
//! Perturbation magnitudes are tracked against the schedule: the run records
//! per-player partial sums of `rho(k) * |eps_i(k)|` and their tail, a finite
//! certificate that the perturbation sequence is summable enough for
//! convergence.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::game::{ActionVector, AggregativeGame};
use crate::math;
use crate::stepsize::StepsizeSchedule;

/// Sequence of updating players with per-update counter increments.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSchedule {
    players: usize,
    steps: Vec<(u32, u32)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleBuildError {
    EmptySchedule,
    PlayerOutOfRange { step: usize, player: u32 },
    ZeroIncrement { step: usize },
}

impl fmt::Display for ScheduleBuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleBuildError::EmptySchedule => write!(f, "schedule has no steps"),
            ScheduleBuildError::PlayerOutOfRange { step, player } => {
                write!(f, "step {step} names player {player} out of range")
            }
            ScheduleBuildError::ZeroIncrement { step } => {
                write!(f, "step {step} has a zero counter increment")
            }
        }
    }
}

impl core::error::Error for ScheduleBuildError {}

impl UpdateSchedule {
    /// `iterations` steps cycling through the players in index order, each
    /// advancing its counter by one.
    pub fn round_robin(players: usize, iterations: usize) -> Self {
        assert!(players >= 1);
        let steps = (0..iterations)
            .map(|k| ((k % players) as u32, 1u32))
            .collect();
        Self { players, steps }
    }

    /// Explicit `(player, counter increment)` steps.
    pub fn from_steps(players: usize, steps: Vec<(u32, u32)>) -> Result<Self, ScheduleBuildError> {
        if steps.is_empty() {
            return Err(ScheduleBuildError::EmptySchedule);
        }
        for (idx, &(pl, dr)) in steps.iter().enumerate() {
            if pl as usize >= players {
                return Err(ScheduleBuildError::PlayerOutOfRange {
                    step: idx,
                    player: pl,
                });
            }
            if dr == 0 {
                return Err(ScheduleBuildError::ZeroIncrement { step: idx });
            }
        }
        Ok(Self { players, steps })
    }

    /// Serializes a recorded engine trace: each event becomes one step per
    /// activated player, in ascending player order, with the increment taken
    /// from the recorded counter jump.
    pub fn from_trace(trace: &crate::engine::EventTrace) -> Result<Self, ScheduleBuildError> {
        let mut counters = vec![0u64; trace.players];
        let mut steps = Vec::new();
        for ev in &trace.events {
            for act in &ev.activations {
                let i = act.player as usize;
                let delta = act.counter.saturating_sub(counters[i]);
                counters[i] = act.counter;
                steps.push((act.player, delta as u32));
            }
        }
        Self::from_steps(trace.players, steps)
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, k: usize) -> (usize, u32) {
        let (pl, dr) = self.steps[k];
        (pl as usize, dr)
    }

    /// Scans the schedule and reports the tightest coverage and counter
    /// bounds, plus the windows that violate supplied claims.
    pub fn analyze(&self, claimed_window: Option<u64>) -> ScheduleReport {
        let n = self.players;
        let horizon = self.steps.len();
        // Tightest window: the farthest any position must look ahead to see
        // every player, over all start positions where that is defined.
        let mut window = 0u64;
        let mut defined = false;
        // next occurrence of each player at or after position k
        let mut next_occ: Vec<Vec<usize>> = vec![vec![usize::MAX; n]; horizon + 1];
        for k in (0..horizon).rev() {
            let carried = next_occ[k + 1].clone();
            next_occ[k].copy_from_slice(&carried);
            next_occ[k][self.steps[k].0 as usize] = k;
        }
        for (k, occ) in next_occ.iter().enumerate().take(horizon) {
            if occ.contains(&usize::MAX) {
                // Some player never occurs again: no window inside the
                // schedule covers this position.
                window = window.max((horizon - k + 1) as u64);
            } else {
                let farthest = occ.iter().max().copied().unwrap_or(k);
                window = window.max((farthest - k + 1) as u64);
            }
            defined = true;
        }
        let coverage_window = if defined { window } else { horizon as u64 };

        // Counter spread and largest increment.
        let mut counters = vec![0u64; n];
        let mut spread = 0u64;
        let mut max_increment = 0u64;
        for &(pl, dr) in &self.steps {
            counters[pl as usize] += dr as u64;
            max_increment = max_increment.max(dr as u64);
            let lo = counters.iter().min().copied().unwrap_or(0);
            let hi = counters.iter().max().copied().unwrap_or(0);
            spread = spread.max(hi - lo);
        }

        // Violations of a claimed coverage window.
        let mut violations = Vec::new();
        if let Some(claim) = claimed_window {
            let claim = claim as usize;
            let mut counts = vec![0u32; n];
            let mut missing = n;
            for k in 0..horizon {
                let pl = self.steps[k].0 as usize;
                if counts[pl] == 0 {
                    missing -= 1;
                }
                counts[pl] += 1;
                if k + 1 >= claim {
                    if missing > 0 {
                        violations.push(k + 1 - claim);
                    }
                    let old = self.steps[k + 1 - claim].0 as usize;
                    counts[old] -= 1;
                    if counts[old] == 0 {
                        missing += 1;
                    }
                }
            }
        }

        ScheduleReport {
            coverage_window,
            counter_spread: spread.max(max_increment),
            max_increment,
            violations,
        }
    }
}

/// Result of scanning a schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    /// Tightest window such that every player appears in any window of that
    /// many consecutive steps.
    pub coverage_window: u64,
    /// Largest observed counter spread (also covering the largest single
    /// increment).
    pub counter_spread: u64,
    pub max_increment: u64,
    /// Start positions of claimed-size windows that missed some player.
    pub violations: Vec<usize>,
}

/// Per-iteration gradient perturbation.
pub trait Perturbation {
    /// Writes the perturbation of player `player` at iteration `k`; `out`
    /// arrives zeroed.
    fn epsilon(&self, player: usize, k: usize, out: &mut [f64]);
}

/// Stock perturbation models.
pub enum BasicPerturbation {
    /// No perturbation.
    None,
    /// `scale / (1 + k)` on every coordinate; summable against any valid
    /// schedule.
    Decaying { scale: f64 },
    /// Constant bias on every coordinate; not summable, so the iteration
    /// settles at a biased point.
    ConstantBias { value: f64 },
}

impl Perturbation for BasicPerturbation {
    fn epsilon(&self, _player: usize, k: usize, out: &mut [f64]) {
        match *self {
            BasicPerturbation::None => {}
            BasicPerturbation::Decaying { scale } => {
                let v = scale / (1.0 + k as f64);
                for o in out.iter_mut() {
                    *o = v;
                }
            }
            BasicPerturbation::ConstantBias { value } => {
                for o in out.iter_mut() {
                    *o = value;
                }
            }
        }
    }
}

/// Summability certificate of one player's perturbation stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummabilityRecord {
    /// Partial sum of `rho(k) * |eps(k)|` over the whole run.
    pub weighted_total: f64,
    /// Contribution of the last tenth of the run.
    pub tail_increment: f64,
}

/// One recorded snapshot of a coordinate run.
#[derive(Debug, Clone, PartialEq)]
pub struct HistorySample {
    /// Iterations completed when the snapshot was taken.
    pub iteration: usize,
    /// Player updated by the last of those iterations.
    pub player: u32,
    /// Stepsize that update applied.
    pub alpha: f64,
    pub actions: ActionVector,
}

/// Outcome of a coordinate run.
pub struct CoordinateRun {
    pub final_actions: ActionVector,
    pub iterations: usize,
    /// Snapshots every `history_stride` iterations, plus the final state.
    pub history: Vec<HistorySample>,
    pub certificates: Vec<SummabilityRecord>,
}

impl CoordinateRun {
    /// Trajectory rows in the trace text layout: iteration, updated player,
    /// stepsize, then the stacked actions.
    pub fn history_to_text(&self) -> String {
        let mut s = String::new();
        for sample in &self.history {
            s.push_str(&format!(
                "{} {} {}",
                sample.iteration, sample.player, sample.alpha
            ));
            for v in sample.actions.as_slice() {
                s.push_str(&format!(" {v}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoordinateError {
    InfeasibleStart { player: usize },
    DimensionMismatch,
}

impl fmt::Display for CoordinateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoordinateError::InfeasibleStart { player } => {
                write!(f, "initial action of player {player} is infeasible")
            }
            CoordinateError::DimensionMismatch => write!(f, "profile does not match the game"),
        }
    }
}

impl core::error::Error for CoordinateError {}

/// Runs the schedule from `x0`. `history_stride` of zero keeps only the
/// final state.
pub fn run_coordinate(
    game: &dyn AggregativeGame,
    schedule: &UpdateSchedule,
    rho: &StepsizeSchedule,
    perturb: &dyn Perturbation,
    x0: &ActionVector,
    history_stride: usize,
) -> Result<CoordinateRun, CoordinateError> {
    let n = game.player_count();
    let p = game.block_len();
    if x0.players() != n || x0.block_len() != p || schedule.players() != n {
        return Err(CoordinateError::DimensionMismatch);
    }
    for i in 0..n {
        if !game.action_set(i).contains(x0.block(i), 1e-9) {
            return Err(CoordinateError::InfeasibleStart { player: i });
        }
    }
    let mut x = x0.clone();
    let mut mean = x.mean_block();
    let mut counters = vec![0u64; n];
    let mut certificates = vec![
        SummabilityRecord {
            weighted_total: 0.0,
            tail_increment: 0.0,
        };
        n
    ];
    let tail_from = schedule.len() - schedule.len() / 10;
    let mut history = Vec::new();
    let mut last_step = (0u32, 0.0f64);
    let mut grad = vec![0.0; p];
    let mut eps = vec![0.0; p];
    let mut shifted = vec![0.0; p];
    let mut projected = vec![0.0; p];

    for k in 0..schedule.len() {
        let (i, delta) = schedule.step(k);
        let alpha = rho.sum_range(counters[i], counters[i] + delta as u64 - 1);
        counters[i] += delta as u64;
        for e in eps.iter_mut() {
            *e = 0.0;
        }
        perturb.epsilon(i, k, &mut eps);
        game.player_gradient(i, x.block(i), &mean, &mut grad);
        for c in 0..p {
            shifted[c] = x.block(i)[c] - alpha * (grad[c] + eps[c]);
        }
        game.action_set(i).project_into(&shifted, &mut projected);
        // Keep the exact mean in sync with the single moved block.
        let inv_n = 1.0 / n as f64;
        for c in 0..p {
            let old = x.block(i)[c];
            mean[c] += (projected[c] - old) * inv_n;
        }
        x.block_mut(i).copy_from_slice(&projected);

        let weighted = rho.value(k as u64) * math::norm2(&eps);
        certificates[i].weighted_total += weighted;
        if k >= tail_from {
            certificates[i].tail_increment += weighted;
        }
        last_step = (i as u32, alpha);
        if history_stride > 0 && (k + 1) % history_stride == 0 {
            history.push(HistorySample {
                iteration: k + 1,
                player: i as u32,
                alpha,
                actions: x.clone(),
            });
        }
    }
    if history.last().map(|h| h.iteration) != Some(schedule.len()) {
        history.push(HistorySample {
            iteration: schedule.len(),
            player: last_step.0,
            alpha: last_step.1,
            actions: x.clone(),
        });
    }
    Ok(CoordinateRun {
        final_actions: x,
        iterations: schedule.len(),
        history,
        certificates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cournot::{generate_instance, monopoly_grid_optimum, solve_ne, CournotGame};
    use crate::game::vi_residual;

    #[test]
    fn round_robin_schedule_covers_in_n_steps() {
        let s = UpdateSchedule::round_robin(5, 100);
        let report = s.analyze(Some(5));
        assert_eq!(report.coverage_window, 5);
        assert_eq!(report.counter_spread, 1);
        assert!(report.violations.is_empty());
    }

    #[test]
    fn starved_player_is_reported() {
        // Player 1 never updates inside a long stretch.
        let mut steps: Vec<(u32, u32)> = Vec::new();
        for k in 0..30 {
            steps.push(((k % 3) as u32, 1));
        }
        for _ in 0..60 {
            steps.push((0, 1));
            steps.push((2, 1));
        }
        let s = UpdateSchedule::from_steps(3, steps).unwrap();
        let report = s.analyze(Some(6));
        assert!(!report.violations.is_empty());
        assert!(report.coverage_window > 6);
    }

    #[test]
    fn schedule_validation_errors() {
        assert!(matches!(
            UpdateSchedule::from_steps(2, vec![]),
            Err(ScheduleBuildError::EmptySchedule)
        ));
        assert!(matches!(
            UpdateSchedule::from_steps(2, vec![(3, 1)]),
            Err(ScheduleBuildError::PlayerOutOfRange { .. })
        ));
        assert!(matches!(
            UpdateSchedule::from_steps(2, vec![(0, 0)]),
            Err(ScheduleBuildError::ZeroIncrement { .. })
        ));
    }

    #[test]
    fn single_player_run_is_projected_gradient_descent() {
        let game = CournotGame::new(generate_instance(1, 1, 0));
        let x0 = game.initial_profile(7);
        let schedule = UpdateSchedule::round_robin(1, 4_000);
        let rho = StepsizeSchedule::power(0.5, 0.6).unwrap();
        let run = run_coordinate(&game, &schedule, &rho, &BasicPerturbation::None, &x0, 0).unwrap();
        let oracle = monopoly_grid_optimum(&game);
        assert!(
            run.final_actions.inf_dist(&oracle) <= 1e-3,
            "final {:?}",
            run.final_actions.as_slice()
        );
    }

    #[test]
    fn round_robin_reaches_equilibrium_and_bias_is_detected() {
        let game = CournotGame::new(generate_instance(3, 1, 7));
        let reference = solve_ne(&game, 1e-9, 1).unwrap();
        let x0 = game.initial_profile(5);
        let schedule = UpdateSchedule::round_robin(3, 40_000);
        let rho = StepsizeSchedule::power(0.5, 0.6).unwrap();

        let clean =
            run_coordinate(&game, &schedule, &rho, &BasicPerturbation::None, &x0, 0).unwrap();
        let gap = clean.final_actions.inf_dist(&reference);
        assert!(gap <= 1e-3, "gap {gap}");
        for cert in &clean.certificates {
            assert_eq!(cert.weighted_total, 0.0);
        }

        let decayed = run_coordinate(
            &game,
            &schedule,
            &rho,
            &BasicPerturbation::Decaying { scale: 1.0 },
            &x0,
            0,
        )
        .unwrap();
        let gap = decayed.final_actions.inf_dist(&reference);
        assert!(gap <= 1e-2, "decayed gap {gap}");
        for cert in &decayed.certificates {
            assert!(cert.weighted_total.is_finite());
            assert!(cert.tail_increment < 1e-3 * (1.0 + cert.weighted_total));
        }

        let biased = run_coordinate(
            &game,
            &schedule,
            &rho,
            &BasicPerturbation::ConstantBias { value: 5.0 },
            &x0,
            0,
        )
        .unwrap();
        let res = vi_residual(&game, &biased.final_actions, 0.01);
        assert!(res > 1e-3, "bias went undetected, residual {res}");
    }

    #[test]
    fn coordinate_locality_holds() {
        let game = CournotGame::new(generate_instance(4, 2, 3));
        let x0 = game.initial_profile(2);
        let schedule = UpdateSchedule::round_robin(4, 37);
        let rho = StepsizeSchedule::constant(0.01).unwrap();
        let run = run_coordinate(&game, &schedule, &rho, &BasicPerturbation::None, &x0, 1).unwrap();
        let mut prev = x0.clone();
        for sample in run.history.iter().take(37) {
            let updated = (sample.iteration - 1) % 4;
            assert_eq!(sample.player as usize, updated);
            for i in 0..4 {
                if i != updated {
                    assert_eq!(
                        sample.actions.block(i),
                        prev.block(i),
                        "iteration {} player {i}",
                        sample.iteration
                    );
                }
            }
            prev = sample.actions.clone();
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let game = CournotGame::new(generate_instance(2, 1, 3));
        let bad = ActionVector::from_stacked(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let schedule = UpdateSchedule::round_robin(2, 10);
        let rho = StepsizeSchedule::constant(0.01).unwrap();
        assert!(matches!(
            run_coordinate(&game, &schedule, &rho, &BasicPerturbation::None, &bad, 0),
            Err(CoordinateError::InfeasibleStart { .. })
        ));
    }
}
