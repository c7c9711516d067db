//! Invariant battery for recorded traces: conservation laws, counter and
//! activation-window bounds, weight positivity, the synchronous replay
//! equivalence, and a direct synchronous oracle for barrier-synchronized
//! runs. Every check returns a named pass/fail with a short detail string.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::augmented;
use crate::engine::{EventTrace, Scheme};
use crate::game::AggregativeGame;
use crate::math;
use crate::topology::delay_constants;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceBattery {
    pub checks: Vec<CheckResult>,
}

impl TraceBattery {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(if c.passed { "PASS " } else { "FAIL " });
            s.push_str(c.name);
            if !c.detail.is_empty() {
                s.push_str(": ");
                s.push_str(&c.detail);
            }
            s.push('\n');
        }
        s.push_str(if self.passed() {
            "all checks passed\n"
        } else {
            "SOME CHECKS FAILED\n"
        });
        s
    }
}

const MASS_TOL: f64 = 1e-9;
const WEIGHT_TOL: f64 = 1e-12;
const EQUIV_TOL: f64 = 1e-12;
const FEAS_TOL: f64 = 1e-9;

/// Runs every applicable check on a full trace.
pub fn run_battery(trace: &EventTrace, game: &dyn AggregativeGame) -> TraceBattery {
    let (mass, weight) = check_conservation(trace);
    let mut checks = vec![
        check_structure(trace),
        check_weight_positivity(trace),
        check_counters(trace),
        check_activation_windows(trace),
        check_staleness_bound(trace),
        mass,
        weight,
        check_feasibility(trace, game),
        check_replay(trace, game),
    ];
    if trace.scheme == Scheme::Synchronous {
        checks.push(check_direct_synchronous(trace, game));
    }
    TraceBattery { checks }
}

fn check_structure(trace: &EventTrace) -> CheckResult {
    let mut ok = true;
    let mut detail = String::new();
    let mut last_t = None;
    for (k, ev) in trace.events.iter().enumerate() {
        if ev.activations.is_empty() {
            ok = false;
            detail = format!("event {k} has no activations");
            break;
        }
        if let Some(t) = last_t {
            if ev.time_us <= t {
                ok = false;
                detail = format!("time not strictly increasing at event {k}");
                break;
            }
        }
        last_t = Some(ev.time_us);
    }

    CheckResult {
        name: "trace structure",
        passed: ok,
        detail,
    }
}

fn check_weight_positivity(trace: &EventTrace) -> CheckResult {
    let n = trace.players as f64;
    // The explicit lower bound n^(-n b) is only numerically meaningful for
    // very small networks; assert it there, strict positivity everywhere.
    let b = lemma_staleness(trace);
    let explicit_bound = if trace.players <= 3 {
        math::powf(n, -(n * b as f64))
    } else {
        0.0
    };
    let mut min_weight = f64::INFINITY;
    for ev in &trace.events {
        for act in &ev.activations {
            min_weight = math::fmin(min_weight, act.weight);
        }
    }
    let passed = min_weight > 0.0 && min_weight >= explicit_bound;
    CheckResult {
        name: "weight positivity",
        passed,
        detail: format!("min weight {min_weight:.3e}, bound {explicit_bound:.3e}"),
    }
}

fn lemma_staleness(trace: &EventTrace) -> u64 {
    delay_constants(
        trace.players,
        trace.bounds.delay_max_us as f64,
        trace.bounds.gap_min_us as f64,
        trace.bounds.gap_max_us as f64,
    )
    .map(|c| c.staleness)
    .unwrap_or(u64::MAX)
}

fn check_counters(trace: &EventTrace) -> CheckResult {
    let n = trace.players;
    let b = lemma_staleness(trace);
    let spread_bound = (n as u64).saturating_mul(b);
    let growth_bound = spread_bound + 1;
    // The per-activation-count scheme redefines the counter, so the spread
    // bound only applies to schemes that track the freshest neighbor.
    let spread_applies = trace.scheme != Scheme::NonAdaptive;
    let mut counters = vec![0u64; n];
    let mut ok = true;
    let mut detail = String::new();
    'outer: for (k, ev) in trace.events.iter().enumerate() {
        for act in &ev.activations {
            let i = act.player as usize;
            if act.counter <= counters[i] {
                ok = false;
                detail = format!("counter not increasing for player {i} at event {k}");
                break 'outer;
            }
            if act.counter - counters[i] > growth_bound {
                ok = false;
                detail = format!(
                    "counter of player {i} grew by {} > {growth_bound} at event {k}",
                    act.counter - counters[i]
                );
                break 'outer;
            }
            counters[i] = act.counter;
        }
        if spread_applies {
            let lo = counters.iter().min().copied().unwrap_or(0);
            let hi = counters.iter().max().copied().unwrap_or(0);
            if hi - lo > spread_bound {
                ok = false;
                detail = format!("counter spread {} > {spread_bound} at event {k}", hi - lo);
                break 'outer;
            }
        }
    }
    CheckResult {
        name: "counter bounds",
        passed: ok,
        detail,
    }
}

fn check_activation_windows(trace: &EventTrace) -> CheckResult {
    let n = trace.players;
    let constants = delay_constants(
        n,
        trace.bounds.delay_max_us as f64,
        trace.bounds.gap_min_us as f64,
        trace.bounds.gap_max_us as f64,
    );
    let window = match constants {
        Ok(c) => c.activation_window as usize,
        Err(_) => {
            return CheckResult {
                name: "activation windows",
                passed: false,
                detail: String::from("invalid timing bounds"),
            }
        }
    };
    let k_total = trace.events.len();
    if k_total < window {
        return CheckResult {
            name: "activation windows",
            passed: true,
            detail: format!("trace shorter than window {window}"),
        };
    }
    // Sliding coverage count over windows of `window` consecutive events.
    let mut per_event_players: Vec<Vec<usize>> = Vec::with_capacity(k_total);
    for ev in &trace.events {
        per_event_players.push(ev.activations.iter().map(|a| a.player as usize).collect());
    }
    let mut counts = vec![0u32; n];
    let mut missing = n;
    for k in 0..k_total {
        for &i in &per_event_players[k] {
            if counts[i] == 0 {
                missing -= 1;
            }
            counts[i] += 1;
        }
        if k + 1 >= window {
            if missing > 0 {
                return CheckResult {
                    name: "activation windows",
                    passed: false,
                    detail: format!(
                        "window ending at event {k} misses {missing} players (bound {window})"
                    ),
                };
            }
            let old = k + 1 - window;
            for &i in &per_event_players[old] {
                counts[i] -= 1;
                if counts[i] == 0 {
                    missing += 1;
                }
            }
        }
    }
    CheckResult {
        name: "activation windows",
        passed: true,
        detail: format!("window bound {window}"),
    }
}

fn check_staleness_bound(trace: &EventTrace) -> CheckResult {
    let realized = augmented::compute_b_from_trace(trace) as u64;
    let bound = lemma_staleness(trace);
    CheckResult {
        name: "staleness bound",
        passed: realized <= bound,
        detail: format!("realized {realized}, a-priori {bound}"),
    }
}

/// Mass conservation: the summed payload of every message not yet consumed
/// equals the summed actions, at every event. Weight conservation is the
/// same statement for the scalar weights, whose total stays at the player
/// count. Returns both checks.
fn check_conservation(trace: &EventTrace) -> (CheckResult, CheckResult) {
    let n = trace.players;
    let p = trace.block;
    let mut unconsumed = vec![0.0f64; p];
    let mut total_actions = vec![0.0f64; p];
    for i in 0..n {
        let b = trace.init_actions.block(i);
        for c in 0..p {
            unconsumed[c] += b[c];
            total_actions[c] += b[c];
        }
    }
    // Kahan-compensated scalar accumulator for the weights.
    let mut wy = n as f64;
    let mut wy_c = 0.0f64;
    let add_w = |acc: &mut f64, comp: &mut f64, v: f64| {
        let t = v - *comp;
        let s = *acc + t;
        *comp = (s - *acc) - t;
        *acc = s;
    };

    let degrees = trace.graph.out_degrees();
    let mut mass_err = 0.0f64;
    let mut weight_err = 0.0f64;
    // Payload of a message: the sender's recorded post-send mass/weight
    // scaled by its reciprocal out-degree.
    let sender_state = |send_event: i64, sender: usize| -> (Vec<f64>, f64) {
        if send_event < 0 {
            (trace.init_actions.block(sender).to_vec(), 1.0)
        } else {
            let ev = &trace.events[send_event as usize];
            let act = ev
                .activations
                .iter()
                .find(|a| a.player as usize == sender)
                .expect("sender activation recorded");
            (act.mass.clone(), act.weight)
        }
    };
    // Consumptions grouped by event.
    let mut consumed_at: Vec<Vec<u32>> = vec![Vec::new(); trace.events.len()];
    for (id, m) in trace.messages.iter().enumerate() {
        if let Some(c) = m.consume_event {
            consumed_at[c as usize].push(id as u32);
        }
    }

    let mut last_actions: Vec<Vec<f64>> = (0..n)
        .map(|i| trace.init_actions.block(i).to_vec())
        .collect();
    for (k, ev) in trace.events.iter().enumerate() {
        for &mid in &consumed_at[k] {
            let m = &trace.messages[mid as usize];
            let inv_d = 1.0 / degrees[m.sender as usize] as f64;
            let (mass, weight) = sender_state(m.send_event, m.sender as usize);
            for c in 0..p {
                unconsumed[c] -= mass[c] * inv_d;
            }
            add_w(&mut wy, &mut wy_c, -(weight * inv_d));
        }
        for act in &ev.activations {
            let i = act.player as usize;
            // The new broadcast (d shares of mass/d) re-enters the pool and
            // the action moves by its increment.
            for c in 0..p {
                unconsumed[c] += act.mass[c];
                total_actions[c] += act.action[c] - last_actions[i][c];
            }
            last_actions[i].copy_from_slice(&act.action);
            add_w(&mut wy, &mut wy_c, act.weight);
        }
        let scale = math::fmax(1.0, math::inf_norm(&total_actions));
        mass_err = math::fmax(
            mass_err,
            math::inf_dist(&unconsumed, &total_actions) / scale,
        );
        weight_err = math::fmax(weight_err, math::abs(wy - n as f64));
    }

    (
        CheckResult {
            name: "mass conservation",
            passed: mass_err <= MASS_TOL,
            detail: format!("max relative error {mass_err:.3e}"),
        },
        CheckResult {
            name: "weight conservation",
            passed: weight_err <= WEIGHT_TOL,
            detail: format!("max absolute error {weight_err:.3e}"),
        },
    )
}

fn check_feasibility(trace: &EventTrace, game: &dyn AggregativeGame) -> CheckResult {
    for (k, ev) in trace.events.iter().enumerate() {
        for act in &ev.activations {
            let set = game.action_set(act.player as usize);
            if !set.contains(&act.action, FEAS_TOL) {
                return CheckResult {
                    name: "action feasibility",
                    passed: false,
                    detail: format!("player {} infeasible at event {k}", act.player),
                };
            }
        }
    }
    CheckResult {
        name: "action feasibility",
        passed: true,
        detail: String::new(),
    }
}

fn check_replay(trace: &EventTrace, game: &dyn AggregativeGame) -> CheckResult {
    match augmented::equivalence_report(trace, game, EQUIV_TOL) {
        Ok(report) => CheckResult {
            name: "replay equivalence",
            passed: report.passed(),
            detail: format!(
                "x {:.2e} z {:.2e} v {:.2e} y {:.2e}, columns {:.2e}, totals {:.2e}/{:.2e}, entries {} diagonals {}",
                report.action_dev.max,
                report.estimate_dev.max,
                report.mass_dev.max,
                report.weight_dev.max,
                report.column_sum_error,
                report.mass_conservation_error,
                report.weight_conservation_error,
                report.entries_valid,
                report.idle_diagonal_ok
            ),
        },
        Err(e) => CheckResult {
            name: "replay equivalence",
            passed: false,
            detail: format!("{e}"),
        },
    }
}

/// Direct barrier-synchronized push-sum, written independently of the event
/// queue: plain per-tick mixing with the previous tick's shares. Compares
/// actions, masses and weights tick by tick.
fn check_direct_synchronous(trace: &EventTrace, game: &dyn AggregativeGame) -> CheckResult {
    let n = trace.players;
    let p = trace.block;
    let graph = &trace.graph;
    let mut actions = trace.init_actions.clone();
    let mut mass: Vec<Vec<f64>> = (0..n).map(|i| actions.block(i).to_vec()).collect();
    let mut weight = vec![1.0f64; n];
    let mut max_dev = 0.0f64;
    let mut shifted = vec![0.0; p];
    let mut grad = vec![0.0; p];
    for (k, ev) in trace.events.iter().enumerate() {
        if ev.activations.len() != n {
            return CheckResult {
                name: "direct synchronous oracle",
                passed: false,
                detail: format!("tick {k} did not activate everyone"),
            };
        }
        // Mix the previous tick's broadcasts.
        let mut w = vec![vec![0.0f64; p]; n];
        let mut y = vec![0.0f64; n];
        for i in 0..n {
            for &j in graph.in_neighbors(i) {
                let inv_d = 1.0 / graph.out_degree(j) as f64;
                for c in 0..p {
                    w[i][c] += mass[j][c] * inv_d;
                }
                y[i] += weight[j] * inv_d;
            }
        }
        for act in &ev.activations {
            let i = act.player as usize;
            let mut estimate = w[i].clone();
            for v in estimate.iter_mut() {
                *v /= y[i];
            }
            let old = actions.block(i).to_vec();
            let mut new_action = old.clone();
            if act.alpha != 0.0 {
                game.player_gradient(i, &old, &estimate, &mut grad);
                for c in 0..p {
                    shifted[c] = old[c] - act.alpha * grad[c];
                }
                game.action_set(i).project_into(&shifted, &mut new_action);
            }
            actions.block_mut(i).copy_from_slice(&new_action);
            for c in 0..p {
                mass[i][c] = w[i][c] + (new_action[c] - old[c]);
            }
            weight[i] = y[i];
            max_dev = math::fmax(max_dev, math::inf_dist(&new_action, &act.action));
            max_dev = math::fmax(max_dev, math::inf_dist(&mass[i], &act.mass));
            max_dev = math::fmax(max_dev, math::abs(weight[i] - act.weight));
        }
    }
    CheckResult {
        name: "direct synchronous oracle",
        passed: max_dev <= EQUIV_TOL,
        detail: format!("max deviation {max_dev:.3e}"),
    }
}
