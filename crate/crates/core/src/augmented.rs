//! Synchronous replay of a recorded trace over an augmented network.
//!
//! The asynchronous run is turned into a linear time-varying iteration by
//! adding `b` chains of virtual nodes per player. A payload consumed `u`
//! events after the event at which it was scattered sits at chain level `u`
//! and moves down one level per global event, reaching its receiver's row at
//! the exact event that consumed it in the engine. Stacking real and virtual
//! nodes gives, per event `k`, a column-stochastic matrix `A(k)` with entries
//! in `{0, 1, 1/d_j}` and the update
//!
//! ```text
//! W(k+1) = A(k) V(k)            (mass, blockwise; same matrix for weights)
//! z_i(k+1) = w_i(k+1) / y_i(k+1)             for players activated at k
//! x_i(k+1) = proj_i[x_i(k) - alpha_i F_i(x_i(k), z_i(k+1))]
//! V(k+1) = W(k+1) + (per-player action increments)
//! ```
//!
//! Broadcasts made at event `k - 1` are scattered by `A(k)`: at that point
//! the sender's real slot holds exactly the payload total `w + dx` of that
//! broadcast, and every consumption happens at event `>= k`, so the bucket
//! `u = consume - k` is well defined. The initialization broadcast is
//! scattered by `A(0)` from the initial mass. Columns of players with no
//! pending broadcast carry a diagonal one; chain columns always shift down.
//!
//! Real-slot mass and weight therefore agree with the engine's per-player
//! state at each player's activations (where the engine defines them); the
//! stepsizes are taken from the recorded trace. Total mass equals the sum of
//! actions and total weight stays at `n` at every event, which the replay
//! checks as it goes.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::engine::EventTrace;
use crate::game::{ActionVector, AggregativeGame};
use crate::math;

/// Dense column-stochastic matrix over `(depth + 1) * n` nodes, with a
/// sparse entry list used to apply it.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStochasticMatrix {
    real: usize,
    dim: usize,
    data: Vec<f64>,
    entries: Vec<(u32, u32, f64)>,
}

impl ColumnStochasticMatrix {
    fn zeros(real: usize, dim: usize) -> Self {
        Self {
            real,
            dim,
            data: vec![0.0; dim * dim],
            entries: Vec::new(),
        }
    }

    fn set(&mut self, row: usize, col: usize, value: f64) {
        let slot = &mut self.data[row * self.dim + col];
        if *slot == 0.0 && value != 0.0 {
            self.entries.push((row as u32, col as u32, value));
        }
        *slot = value;
    }

    /// Zeroes only the currently set entries, keeping the allocation.
    fn clear(&mut self) {
        for &(r, c, _) in &self.entries {
            self.data[r as usize * self.dim + c as usize] = 0.0;
        }
        self.entries.clear();
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn real_nodes(&self) -> usize {
        self.real
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.dim + col]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for &(_, c, v) in &self.entries {
            sums[c as usize] += v;
        }
        sums
    }

    /// Largest deviation of any column sum from one.
    pub fn column_sum_error(&self) -> f64 {
        self.column_sums()
            .iter()
            .map(|s| math::abs(s - 1.0))
            .fold(0.0, math::fmax)
    }

    /// Checks every nonzero entry is `1` or the column owner's exact
    /// reciprocal out-degree.
    pub fn entries_valid(&self, out_degrees: &[usize]) -> bool {
        for &(_, c, v) in &self.entries {
            let ok = if (c as usize) < self.real {
                v == 1.0 || v == 1.0 / out_degrees[c as usize] as f64
            } else {
                v == 1.0
            };
            if !ok {
                return false;
            }
        }
        true
    }

    /// Applies the matrix to per-node blocks: `dst_r = sum_c A[r c] src_c`.
    pub fn apply_blocks(&self, src: &[Vec<f64>], dst: &mut [Vec<f64>]) {
        for d in dst.iter_mut() {
            for v in d.iter_mut() {
                *v = 0.0;
            }
        }
        for &(r, c, a) in &self.entries {
            let (r, c) = (r as usize, c as usize);
            let s = &src[c];
            let d = &mut dst[r];
            for i in 0..s.len() {
                d[i] += a * s[i];
            }
        }
    }

    pub fn apply_scalars(&self, src: &[f64], dst: &mut [f64]) {
        for d in dst.iter_mut() {
            *d = 0.0;
        }
        for &(r, c, a) in &self.entries {
            dst[r as usize] += a * src[c as usize];
        }
    }
}

/// Stacked state of the synchronous replay after an event.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    /// Per-node mass blocks, real players first.
    pub mass: Vec<Vec<f64>>,
    /// Mixed mass `W` of the last applied event.
    pub mixed: Vec<Vec<f64>>,
    /// Per-node weights.
    pub weight: Vec<f64>,
    /// Real players' actions.
    pub actions: ActionVector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplayError {
    /// The trace has no per-event snapshots (metrics-only run).
    TraceWithoutSnapshots,
    /// A message needs a chain deeper than the provided bound.
    StalenessExceedsBound {
        sender: u32,
        receiver: u32,
        send_event: i64,
        needed: u32,
        bound: u32,
    },
    /// Replay weight of an activated player was not positive.
    WeightNotPositive { player: usize, event: usize },
}

impl fmt::Display for ReplayError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReplayError::TraceWithoutSnapshots => {
                write!(f, "trace carries no per-event snapshots")
            }
            ReplayError::StalenessExceedsBound {
                sender,
                receiver,
                send_event,
                needed,
                bound,
            } => write!(
                f,
                "message {sender}->{receiver} sent at event {send_event} needs chain depth {needed} > {bound}"
            ),
            ReplayError::WeightNotPositive { player, event } => {
                write!(f, "nonpositive weight for player {player} at event {event}")
            }
        }
    }
}

impl core::error::Error for ReplayError {}

/// Realized staleness of a trace: the smallest `b` such that every
/// player-to-player message is consumed within `b` global events of its send
/// event. Self-deliveries do not travel the network and are excluded; a
/// message still pending at the end of the trace counts as
/// `events - send_event` (the initialization broadcast is sent at `-1`).
pub fn compute_b_from_trace(trace: &EventTrace) -> u32 {
    let horizon = trace.event_count() as i64;
    let mut b = 0i64;
    for m in &trace.messages {
        if m.sender == m.receiver {
            continue;
        }
        let staleness = match m.consume_event {
            Some(c) => c as i64 - m.send_event,
            None => horizon - m.send_event,
        };
        if staleness > b {
            b = staleness;
        }
    }
    b as u32
}

/// Chain depth the replay needs: the largest consumption lag measured from
/// the scatter event (one after the send), over all messages including
/// self-deliveries and pending ones.
pub fn replay_chain_depth(trace: &EventTrace) -> u32 {
    let horizon = trace.event_count() as i64;
    let mut depth = 0i64;
    for m in &trace.messages {
        let spray = m.send_event + 1;
        let lag = match m.consume_event {
            Some(c) => c as i64 - spray,
            None => horizon - spray,
        };
        if lag > depth {
            depth = lag;
        }
    }
    depth as u32
}

/// Builds the transition matrix of one event. `depth` chain levels must
/// cover every bucket scattered at `k`; a tighter bound fails with the
/// offending message.
pub fn build_augmented_matrix(
    trace: &EventTrace,
    k: usize,
    depth: u32,
) -> Result<ColumnStochasticMatrix, ReplayError> {
    let sprays = trace.sends_by_spray_event();
    let n = trace.players;
    let mut mat = ColumnStochasticMatrix::zeros(n, (depth as usize + 1) * n);
    fill_matrix(&mut mat, trace, &sprays, k, depth)?;
    Ok(mat)
}

fn fill_matrix(
    mat: &mut ColumnStochasticMatrix,
    trace: &EventTrace,
    sprays: &[Vec<u32>],
    k: usize,
    depth: u32,
) -> Result<(), ReplayError> {
    let n = trace.players;
    let horizon = trace.event_count() as i64;
    mat.clear();
    // Chain shifts are inserted first so that, during application, a slot
    // accumulates older payloads before the ones scattered at this event;
    // the resulting float evaluation order matches the engine's tape-ordered
    // buffer sums exactly.
    for level in 1..=depth as usize {
        for i in 0..n {
            mat.set((level - 1) * n + i, level * n + i, 1.0);
        }
    }
    let mut sprayed = vec![false; n];
    for &mid in &sprays[k] {
        let m = &trace.messages[mid as usize];
        let sender = m.sender as usize;
        sprayed[sender] = true;
        let bucket = match m.consume_event {
            Some(c) => c as i64 - k as i64,
            None => horizon - k as i64,
        };
        debug_assert!(bucket >= 0, "consumption before scatter");
        if bucket > depth as i64 {
            return Err(ReplayError::StalenessExceedsBound {
                sender: m.sender,
                receiver: m.receiver,
                send_event: m.send_event,
                needed: bucket as u32,
                bound: depth,
            });
        }
        let row = bucket as usize * n + m.receiver as usize;
        let share = 1.0 / trace.graph.out_degree(sender) as f64;
        mat.set(row, sender, share);
    }
    for (j, was_sprayed) in sprayed.iter().enumerate() {
        if !was_sprayed {
            mat.set(j, j, 1.0);
        }
    }
    Ok(())
}

/// Stepping replay of a full trace.
pub struct AugmentedReplay<'a> {
    trace: &'a EventTrace,
    game: &'a dyn AggregativeGame,
    sprays: Vec<Vec<u32>>,
    depth: u32,
    state: AugmentedState,
    next_event: usize,
    matrix: ColumnStochasticMatrix,
    scratch_mass: Vec<Vec<f64>>,
    scratch_weight: Vec<f64>,
}

impl<'a> AugmentedReplay<'a> {
    pub fn new(trace: &'a EventTrace, game: &'a dyn AggregativeGame) -> Result<Self, ReplayError> {
        if trace.event_count() > 0 && trace.events.iter().all(|e| e.activations.is_empty()) {
            return Err(ReplayError::TraceWithoutSnapshots);
        }
        let n = trace.players;
        let p = trace.block;
        let depth = replay_chain_depth(trace);
        let dim = (depth as usize + 1) * n;
        let mut mass = vec![vec![0.0; p]; dim];
        let mut weight = vec![0.0; dim];
        for i in 0..n {
            mass[i].copy_from_slice(trace.init_actions.block(i));
            weight[i] = 1.0;
        }
        Ok(Self {
            trace,
            game,
            sprays: trace.sends_by_spray_event(),
            depth,
            state: AugmentedState {
                mass,
                mixed: vec![vec![0.0; p]; dim],
                weight,
                actions: trace.init_actions.clone(),
            },
            next_event: 0,
            matrix: ColumnStochasticMatrix::zeros(n, dim),
            scratch_mass: vec![vec![0.0; p]; dim],
            scratch_weight: vec![0.0; dim],
        })
    }

    pub fn chain_depth(&self) -> u32 {
        self.depth
    }

    pub fn state(&self) -> &AugmentedState {
        &self.state
    }

    pub fn next_event(&self) -> usize {
        self.next_event
    }

    pub fn events_remaining(&self) -> usize {
        self.trace.event_count() - self.next_event
    }

    /// Tape indices scattered at event `k`.
    pub fn sprays_at(&self, k: usize) -> &[u32] {
        &self.sprays[k]
    }

    /// Matrix of the next event, before stepping past it.
    pub fn next_matrix(&self) -> Result<ColumnStochasticMatrix, ReplayError> {
        build_augmented_matrix(self.trace, self.next_event, self.depth)
    }

    /// Matrix applied by the most recent [`Self::step`].
    pub fn last_matrix(&self) -> &ColumnStochasticMatrix {
        &self.matrix
    }

    /// Advances one event; returns the event index just applied, or `None`
    /// at the end of the trace.
    pub fn step(&mut self) -> Result<Option<usize>, ReplayError> {
        if self.next_event >= self.trace.event_count() {
            return Ok(None);
        }
        let k = self.next_event;
        let mut mat = core::mem::replace(&mut self.matrix, ColumnStochasticMatrix::zeros(0, 0));
        fill_matrix(&mut mat, self.trace, &self.sprays, k, self.depth)?;
        mat.apply_blocks(&self.state.mass, &mut self.scratch_mass);
        mat.apply_scalars(&self.state.weight, &mut self.scratch_weight);
        self.matrix = mat;
        core::mem::swap(&mut self.state.mixed, &mut self.scratch_mass);
        core::mem::swap(&mut self.state.weight, &mut self.scratch_weight);

        let p = self.trace.block;
        // V(k+1) = W(k+1) on every node, plus the action increment on the
        // slots of players activated at k.
        for (node, m) in self.state.mass.iter_mut().enumerate() {
            m.copy_from_slice(&self.state.mixed[node]);
        }
        let mut new_action = vec![0.0; p];
        let mut shifted = vec![0.0; p];
        let mut grad = vec![0.0; p];
        for act in &self.trace.events[k].activations {
            let i = act.player as usize;
            let y = self.state.weight[i];
            if y.is_nan() || y <= 0.0 {
                return Err(ReplayError::WeightNotPositive {
                    player: i,
                    event: k,
                });
            }
            let w = &self.state.mixed[i];
            let mut estimate = w.clone();
            for v in estimate.iter_mut() {
                *v /= y;
            }
            let old = self.state.actions.block(i).to_vec();
            if act.alpha == 0.0 {
                new_action.copy_from_slice(&old);
            } else {
                self.game.player_gradient(i, &old, &estimate, &mut grad);
                for c in 0..p {
                    shifted[c] = old[c] - act.alpha * grad[c];
                }
                self.game
                    .action_set(i)
                    .project_into(&shifted, &mut new_action);
            }
            self.state.actions.block_mut(i).copy_from_slice(&new_action);
            for c in 0..p {
                self.state.mass[i][c] = self.state.mixed[i][c] + (new_action[c] - old[c]);
            }
        }
        self.next_event += 1;
        Ok(Some(k))
    }
}

/// Per-quantity outcome of an equivalence comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub max: f64,
    /// First event where the deviation exceeded the tolerance.
    pub first_divergence: Option<usize>,
}

impl Deviation {
    fn new() -> Self {
        Self {
            max: 0.0,
            first_divergence: None,
        }
    }

    fn update(&mut self, value: f64, event: usize, tol: f64) {
        if value > self.max {
            self.max = value;
        }
        if value > tol && self.first_divergence.is_none() {
            self.first_divergence = Some(event);
        }
    }
}

/// Summary of one replay run against its source trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub events: usize,
    pub players: usize,
    pub chain_depth: u32,
    pub tolerance: f64,
    pub action_dev: Deviation,
    pub estimate_dev: Deviation,
    pub mass_dev: Deviation,
    pub weight_dev: Deviation,
    /// Worst column-sum error over all transition matrices.
    pub column_sum_error: f64,
    /// Every matrix entry was `1` or the exact reciprocal out-degree.
    pub entries_valid: bool,
    /// Real columns with no pending broadcast always carried a diagonal one.
    pub idle_diagonal_ok: bool,
    /// Worst relative total-mass conservation error.
    pub mass_conservation_error: f64,
    /// Worst absolute total-weight deviation from `n`.
    pub weight_conservation_error: f64,
}

impl EquivalenceReport {
    /// Allowance for the float drift of the total weight: the stochastic
    /// columns carry reciprocal degrees whose sums are off by up to an ulp,
    /// so the state total random-walks by a few ulps of `n` per event. The
    /// engine drifts identically; this is not an implementation discrepancy.
    pub fn weight_drift_allowance(&self) -> f64 {
        1e-12 + 4.0 * f64::EPSILON * self.players as f64 * self.events as f64
    }

    pub fn passed(&self) -> bool {
        self.action_dev.first_divergence.is_none()
            && self.estimate_dev.first_divergence.is_none()
            && self.mass_dev.first_divergence.is_none()
            && self.weight_dev.first_divergence.is_none()
            && self.column_sum_error <= 1e-15
            && self.entries_valid
            && self.idle_diagonal_ok
            && self.mass_conservation_error <= 1e-9
            && self.weight_conservation_error <= self.weight_drift_allowance()
    }

    pub fn render(&self) -> String {
        let line = |name: &str, d: &Deviation| match d.first_divergence {
            Some(k) => format!(
                "{name}: max deviation {:.3e}, diverged at event {k}\n",
                d.max
            ),
            None => format!("{name}: max deviation {:.3e}\n", d.max),
        };
        let mut s = String::new();
        s.push_str(&format!(
            "replay over {} events, chain depth {}\n",
            self.events, self.chain_depth
        ));
        s.push_str(&line("actions", &self.action_dev));
        s.push_str(&line("estimates", &self.estimate_dev));
        s.push_str(&line("mass", &self.mass_dev));
        s.push_str(&line("weight", &self.weight_dev));
        s.push_str(&format!(
            "column sums off by {:.3e}; entries valid: {}; idle diagonals: {}\n",
            self.column_sum_error, self.entries_valid, self.idle_diagonal_ok
        ));
        s.push_str(&format!(
            "mass conservation {:.3e} (rel), weight conservation {:.3e} (abs)\n",
            self.mass_conservation_error, self.weight_conservation_error
        ));
        s.push_str(if self.passed() { "PASS\n" } else { "FAIL\n" });
        s
    }
}

/// Replays a trace and compares it to the engine's record at every event.
pub fn equivalence_report(
    trace: &EventTrace,
    game: &dyn AggregativeGame,
    tolerance: f64,
) -> Result<EquivalenceReport, ReplayError> {
    let mut replay = AugmentedReplay::new(trace, game)?;
    let n = trace.players;
    let mut action_dev = Deviation::new();
    let mut estimate_dev = Deviation::new();
    let mut mass_dev = Deviation::new();
    let mut weight_dev = Deviation::new();
    let mut column_sum_error = 0.0f64;
    let mut entries_valid = true;
    let mut idle_diagonal_ok = true;
    let mut mass_cons = 0.0f64;
    let mut weight_cons = 0.0f64;
    let degrees = trace.graph.out_degrees();

    while replay.events_remaining() > 0 {
        let k = replay.next_event();
        replay.step()?;
        let mat = replay.last_matrix();
        column_sum_error = math::fmax(column_sum_error, mat.column_sum_error());
        if !mat.entries_valid(&degrees) {
            entries_valid = false;
        }
        let sprayers: Vec<usize> = replay
            .sprays_at(k)
            .iter()
            .map(|&mid| trace.messages[mid as usize].sender as usize)
            .collect();
        for j in (0..n).filter(|j| !sprayers.contains(j)) {
            if mat.get(j, j) != 1.0 {
                idle_diagonal_ok = false;
            }
        }
        let st = replay.state();
        for act in &trace.events[k].activations {
            let i = act.player as usize;
            let y = st.weight[i];
            let mut est = st.mixed[i].clone();
            for v in est.iter_mut() {
                *v /= y;
            }
            estimate_dev.update(math::inf_dist(&est, &act.estimate), k, tolerance);
            action_dev.update(
                math::inf_dist(st.actions.block(i), &act.action),
                k,
                tolerance,
            );
            mass_dev.update(math::inf_dist(&st.mass[i], &act.mass), k, tolerance);
            weight_dev.update(math::abs(y - act.weight), k, tolerance);
        }
        // Conservation: total replay mass equals total actions; total weight
        // stays at n.
        let p = trace.block;
        let mut total_mass = vec![0.0; p];
        for m in &st.mass {
            for c in 0..p {
                total_mass[c] += m[c];
            }
        }
        let mut total_actions = vec![0.0; p];
        for i in 0..n {
            let b = st.actions.block(i);
            for c in 0..p {
                total_actions[c] += b[c];
            }
        }
        let scale = math::fmax(1.0, math::inf_norm(&total_actions));
        mass_cons = math::fmax(
            mass_cons,
            math::inf_dist(&total_mass, &total_actions) / scale,
        );
        // Compensated sum: a plain pass over thousands of chain slots can
        // drift past the tolerance on its own.
        let mut total_weight = 0.0f64;
        let mut comp = 0.0f64;
        for &w in &st.weight {
            let t = w - comp;
            let s = total_weight + t;
            comp = (s - total_weight) - t;
            total_weight = s;
        }
        weight_cons = math::fmax(weight_cons, math::abs(total_weight - n as f64));
    }

    Ok(EquivalenceReport {
        events: trace.event_count(),
        players: n,
        chain_depth: replay.chain_depth(),
        tolerance,
        action_dev,
        estimate_dev,
        mass_dev,
        weight_dev,
        column_sum_error,
        entries_valid,
        idle_diagonal_ok,
        mass_conservation_error: mass_cons,
        weight_conservation_error: weight_cons,
    })
}

/// Replays a trace and returns the state after every event. Meant for short
/// traces; the streaming [`equivalence_report`] covers long ones.
pub fn replay_states(
    trace: &EventTrace,
    game: &dyn AggregativeGame,
) -> Result<Vec<AugmentedState>, ReplayError> {
    let mut replay = AugmentedReplay::new(trace, game)?;
    let mut out = Vec::with_capacity(trace.event_count());
    while replay.step()?.is_some() {
        out.push(replay.state().clone());
    }
    Ok(out)
}

/// Distance of every player's standing aggregate estimate from the running
/// action mean at event `k`: `max_i |v_i(k+1)/y_i(k+1) - mean(x(k))|_2`,
/// both read off the trace.
pub fn consensus_residual(trace: &EventTrace, k: usize) -> f64 {
    assert!(k < trace.event_count(), "event index out of range");
    consensus_residuals(trace)[k]
}

/// Residuals for every event of a trace, in one scan.
pub fn consensus_residuals(trace: &EventTrace) -> Vec<f64> {
    let n = trace.players;
    let mut pre_mean = trace.init_actions.mean_block();
    let mut out = Vec::with_capacity(trace.event_count());
    trace.scan_states(|_, actions, masses, weights, _| {
        let mut residual = 0.0f64;
        for i in 0..n {
            let mut d = 0.0;
            for c in 0..trace.block {
                let diff = masses[i][c] / weights[i] - pre_mean[c];
                d += diff * diff;
            }
            residual = math::fmax(residual, math::sqrt(d));
        }
        out.push(residual);
        pre_mean = actions.mean_block();
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cournot::{generate_instance, CournotGame};
    use crate::engine::{run_simulation, Scheme, SimConfig};
    use crate::stepsize::StepsizeSchedule;
    use crate::timing::TimingModel;
    use crate::topology::{Digraph, TopologyKind};

    fn tight_timing() -> TimingModel {
        TimingModel {
            comp_mean_base_us: 1_000.0,
            comp_mean_sigma_us: 2_000.0,
            comp_min_us: 500,
            comp_max_us: 8_000,
            delay_mean_us: 1_000.0,
            delay_min_us: 100,
            delay_max_us: 4_000,
        }
    }

    #[test]
    fn single_player_replay_uses_one_by_one_identity() {
        let game = CournotGame::new(generate_instance(1, 1, 0));
        let graph = Digraph::generate(TopologyKind::Complete, 1).unwrap();
        let cfg = SimConfig::new(
            Scheme::Aggressive,
            StepsizeSchedule::constant(0.05).unwrap(),
            50_000,
            4,
        );
        let trace = run_simulation(&game, &graph, &tight_timing(), &cfg).unwrap();
        assert_eq!(replay_chain_depth(&trace), 0);
        assert_eq!(compute_b_from_trace(&trace), 0);
        let mat = build_augmented_matrix(&trace, 1, 0).unwrap();
        assert_eq!(mat.dim(), 1);
        assert_eq!(mat.get(0, 0), 1.0);
        let report = equivalence_report(&trace, &game, 1e-12).unwrap();
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn synchronous_trace_has_unit_staleness() {
        let game = CournotGame::new(generate_instance(3, 1, 2));
        let graph = Digraph::generate(TopologyKind::Complete, 3).unwrap();
        let cfg = SimConfig::new(
            Scheme::Synchronous,
            StepsizeSchedule::constant(0.02).unwrap(),
            200_000,
            8,
        );
        let trace = run_simulation(&game, &graph, &tight_timing(), &cfg).unwrap();
        assert_eq!(compute_b_from_trace(&trace), 1);
        let report = equivalence_report(&trace, &game, 1e-12).unwrap();
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn asynchronous_cycle_replay_matches_engine() {
        let game = CournotGame::new(generate_instance(3, 2, 5));
        let graph = Digraph::generate(TopologyKind::Cycle, 3).unwrap();
        let cfg = SimConfig::new(
            Scheme::Aggressive,
            StepsizeSchedule::constant(0.01).unwrap(),
            300_000,
            13,
        );
        let trace = run_simulation(&game, &graph, &tight_timing(), &cfg).unwrap();
        assert!(trace.event_count() > 50);
        let b = compute_b_from_trace(&trace);
        let constants = crate::topology::delay_constants(
            3,
            trace.bounds.delay_max_us as f64,
            trace.bounds.gap_min_us as f64,
            trace.bounds.gap_max_us as f64,
        )
        .unwrap();
        assert!(
            u64::from(b) <= constants.staleness,
            "b {b} vs {constants:?}"
        );
        let report = equivalence_report(&trace, &game, 1e-12).unwrap();
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn matrix_depth_bound_reports_offender() {
        let game = CournotGame::new(generate_instance(3, 1, 2));
        let graph = Digraph::generate(TopologyKind::Cycle, 3).unwrap();
        let cfg = SimConfig::new(
            Scheme::Aggressive,
            StepsizeSchedule::constant(0.01).unwrap(),
            100_000,
            7,
        );
        let trace = run_simulation(&game, &graph, &tight_timing(), &cfg).unwrap();
        assert!(replay_chain_depth(&trace) >= 1);
        let mut failed = false;
        for k in 0..trace.event_count() {
            if let Err(ReplayError::StalenessExceedsBound { needed, bound, .. }) =
                build_augmented_matrix(&trace, k, 0)
            {
                assert!(needed > bound);
                failed = true;
                break;
            }
        }
        assert!(failed, "depth 0 should be insufficient somewhere");
    }

    #[test]
    fn weight_identity_matches_transition_product() {
        // Replayed weights equal the product of all transition matrices
        // applied to the initial weights.
        let game = CournotGame::new(generate_instance(3, 1, 4));
        let graph = Digraph::generate(TopologyKind::Cycle, 3).unwrap();
        let cfg = SimConfig::new(
            Scheme::Aggressive,
            StepsizeSchedule::constant(0.01).unwrap(),
            60_000,
            21,
        );
        let trace = run_simulation(&game, &graph, &tight_timing(), &cfg).unwrap();
        let mut replay = AugmentedReplay::new(&trace, &game).unwrap();
        let dim = (replay.chain_depth() as usize + 1) * 3;
        let mut product: Vec<f64> = (0..dim * dim)
            .map(|i| if i % (dim + 1) == 0 { 1.0 } else { 0.0 })
            .collect();
        let mut y0 = vec![0.0; dim];
        for (i, v) in y0.iter_mut().enumerate().take(3) {
            *v = 1.0;
            let _ = i;
        }
        while replay.events_remaining() > 0 {
            let mat = replay.next_matrix().unwrap();
            let mut next = vec![0.0; dim * dim];
            for r in 0..dim {
                for c in 0..dim {
                    let a = mat.get(r, c);
                    if a != 0.0 {
                        for j in 0..dim {
                            next[r * dim + j] += a * product[c * dim + j];
                        }
                    }
                }
            }
            product = next;
            replay.step().unwrap();
            let mut expected = vec![0.0; dim];
            for r in 0..dim {
                for c in 0..dim {
                    expected[r] += product[r * dim + c] * y0[c];
                }
            }
            let dev = math::inf_dist(&expected, &replay.state().weight);
            assert!(dev <= 1e-12, "weight identity broke: {dev}");
        }
    }

    #[test]
    fn slow_delays_produce_multi_event_staleness() {
        let game = CournotGame::new(generate_instance(3, 1, 9));
        let graph = Digraph::generate(TopologyKind::Cycle, 3).unwrap();
        let timing = TimingModel {
            comp_mean_base_us: 800.0,
            comp_mean_sigma_us: 500.0,
            comp_min_us: 400,
            comp_max_us: 2_000,
            delay_mean_us: 3_000.0,
            delay_min_us: 1_000,
            delay_max_us: 6_000,
        };
        let cfg = SimConfig::new(
            Scheme::Aggressive,
            StepsizeSchedule::constant(0.01).unwrap(),
            150_000,
            2,
        );
        let trace = run_simulation(&game, &graph, &timing, &cfg).unwrap();
        assert!(compute_b_from_trace(&trace) >= 2);
        let report = equivalence_report(&trace, &game, 1e-12).unwrap();
        assert!(report.passed(), "{}", report.render());
    }

    #[test]
    fn consensus_residual_vanishes_on_frozen_runs() {
        let game = CournotGame::new(generate_instance(3, 1, 2));
        let graph = Digraph::generate(TopologyKind::Cycle, 3).unwrap();
        let mut cfg = SimConfig::new(
            Scheme::Aggressive,
            StepsizeSchedule::constant(0.01).unwrap(),
            500_000,
            6,
        );
        cfg.frozen_actions = true;
        let trace = run_simulation(&game, &graph, &tight_timing(), &cfg).unwrap();
        let last = trace.event_count() - 1;
        assert!(consensus_residual(&trace, last) <= 1e-9);
        let rs = consensus_residuals(&trace);
        assert_eq!(rs.len(), trace.event_count());
        assert!(rs[0] > rs[last]);
    }
}
