//! Discrete-event executor for asynchronous push-sum Nash seeking.
//!
//! Each player holds an action block, a push-sum mass/weight pair used to
//! estimate the average action, and an update counter. Between activations a
//! player only collects incoming messages into a buffer; nothing but their
//! sums and the freshest counter ever leaves it. When activated the player:
//!
//! 1. drains the buffer into `w` (mass), `y` (weight), `lmax` (counter) and
//!    forms the aggregate estimate `z = w / y`;
//! 2. picks a stepsize per scheme — the catch-up scheme sums every schedule
//!    term between its own counter and `lmax`, so a lagging player takes a
//!    larger step;
//! 3. projects its gradient step onto its action set;
//! 4. restores mass conservation with `v = w + (x_new - x_old)`;
//! 5. broadcasts `v / d`, `y / d` and its new counter to all out-neighbors,
//!    itself included; the self-share is held locally and merged into the
//!    next drain.
//!
//! An activation that finds no reception besides the held self-share is an
//! idle poll: no information arrived, so no update happens, nothing is
//! broadcast, and the push-sum weight is not diluted. Idle polls are counted
//! on the trace. Without this rule a player activating much faster than its
//! in-neighbors deliver would divide its weight by its out-degree at every
//! self-only update, and the resulting weight starvation makes the aggregate
//! estimate arbitrarily fragile against its own action increments.
//!
//! Real concurrency is replaced by an event queue keyed on
//! `(time, sequence)`; ties in activation times form one global event whose
//! members all read buffer state as of that instant. The whole run is a pure
//! function of `(game, graph, timing, config)`.
//!
//! Simulated time is integer microseconds. A global event index counts
//! activation instants; message records carry their send and consumption
//! event indices, which is what the synchronous replay consumes.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;
use core::fmt;

use crate::game::{ActionVector, AggregativeGame};
use crate::stepsize::{aggressive_stepsize, StepsizeSchedule};
use crate::timing::{PlayerTiming, TimingModel};
use crate::topology::Digraph;
use crate::{math, rng};

const TAG_SIM_X0: u64 = 0x73696d78;
const WEIGHT_FLOOR: f64 = 1e-300;

/// Stepsize/activation scheme of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Asynchronous activations; a player sums all schedule terms between
    /// its own counter and the freshest buffered counter.
    Aggressive,
    /// Asynchronous activations; a player always takes the single schedule
    /// term indexed by its own activation count.
    NonAdaptive,
    /// Barrier-synchronized rounds: every player updates at common ticks and
    /// a tick lasts as long as the slowest computation plus the slowest
    /// message of the round.
    Synchronous,
}

impl Scheme {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "aggressive" => Some(Self::Aggressive),
            "nonadaptive" => Some(Self::NonAdaptive),
            "synchronous" => Some(Self::Synchronous),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Aggressive => "aggressive",
            Self::NonAdaptive => "nonadaptive",
            Self::Synchronous => "synchronous",
        }
    }
}

/// Optional quiescence stop: the run ends early once `window` consecutive
/// events move neither actions nor aggregate estimates by more than the
/// thresholds (infinity norm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub eps_action: f64,
    pub eps_estimate: f64,
    pub window: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheme: Scheme,
    pub rho: StepsizeSchedule,
    pub horizon_us: u64,
    pub seed: u64,
    /// Disables the optimization step: pure average consensus on the initial
    /// actions.
    pub frozen_actions: bool,
    /// Records per-event snapshots and the message tape needed by the replay
    /// and the invariant battery. Metrics-only runs leave both empty.
    pub record_full: bool,
    pub stop: Option<StopRule>,
}

impl SimConfig {
    pub fn new(scheme: Scheme, rho: StepsizeSchedule, horizon_us: u64, seed: u64) -> Self {
        Self {
            scheme,
            rho,
            horizon_us,
            seed,
            frozen_actions: false,
            record_full: true,
            stop: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    NotStronglyConnected,
    BadHorizon,
    BadTiming,
    /// A push-sum weight fell below the representable floor.
    WeightUnderflow {
        player: usize,
        time_us: u64,
    },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::NotStronglyConnected => write!(f, "graph is not strongly connected"),
            SimError::BadHorizon => write!(f, "horizon must be positive"),
            SimError::BadTiming => write!(f, "invalid timing model"),
            SimError::WeightUnderflow { player, time_us } => {
                write!(f, "weight underflow at player {player}, t={time_us}us")
            }
        }
    }
}

impl core::error::Error for SimError {}

/// One message on the tape. The initialization broadcast carries send event
/// `-1`; a message never drained from a buffer keeps `consume_event = None`.
#[derive(Debug, Clone, PartialEq)]
pub struct MsgRecord {
    pub sender: u32,
    pub receiver: u32,
    pub send_event: i64,
    pub consume_event: Option<u32>,
}

/// Post-update snapshot of one activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub player: u32,
    /// Stepsize applied (zero in frozen runs).
    pub alpha: f64,
    /// Aggregate estimate `w / y` used by the update.
    pub estimate: Vec<f64>,
    /// Freshest buffered counter at this activation.
    pub buffered_max: u64,
    /// Message-tape indices drained by this activation.
    pub consumed: Vec<u32>,
    pub action: Vec<f64>,
    pub mass: Vec<f64>,
    pub weight: f64,
    pub counter: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub time_us: u64,
    pub activations: Vec<Activation>,
}

/// Idle-poll tally: activations skipped because nothing had arrived since
/// the player's previous update.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IdlePolls {
    pub per_player: Vec<u64>,
    pub total: u64,
}

/// Effective bounds the realized schedule respects, used by the invariant
/// battery to evaluate the a-priori staleness constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealizedBounds {
    pub gap_min_us: u64,
    pub gap_max_us: u64,
    pub delay_max_us: u64,
}

impl RealizedBounds {
    /// Bounds implied by a timing model under a scheme. Synchronized rounds
    /// stretch activation gaps by the slowest message of the round.
    ///
    /// Asynchronous schemes update only on fresh information, so the bound
    /// on the gap between a player's updates must cover the time for an
    /// update anywhere in the network to reach it: a path of at most `n`
    /// hops, each one computation plus one delay.
    pub fn from_model_n(timing: &TimingModel, scheme: Scheme, players: usize) -> Self {
        if scheme == Scheme::Synchronous {
            Self {
                gap_min_us: timing.comp_min_us + timing.delay_min_us,
                gap_max_us: timing.comp_max_us + timing.delay_max_us,
                delay_max_us: timing.delay_max_us,
            }
        } else {
            Self {
                gap_min_us: timing.comp_min_us,
                gap_max_us: players as u64 * (timing.comp_max_us + timing.delay_max_us)
                    + timing.comp_max_us,
                delay_max_us: timing.delay_max_us,
            }
        }
    }
}

/// Full record of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTrace {
    pub players: usize,
    pub block: usize,
    pub scheme: Scheme,
    pub rho: StepsizeSchedule,
    pub seed: u64,
    pub horizon_us: u64,
    pub frozen: bool,
    pub graph: Digraph,
    pub bounds: RealizedBounds,
    /// Initial actions; initial mass equals them, weights start at one,
    /// counters at zero.
    pub init_actions: ActionVector,
    pub events: Vec<EventRecord>,
    pub messages: Vec<MsgRecord>,
    pub idle_polls: IdlePolls,
    /// Final actions, also kept for metrics-only runs.
    pub final_actions: ActionVector,
}

impl EventTrace {
    pub fn event_count(&self) -> usize {
        self.events.len()
    }

    /// Sends grouped by spray event: entry `k` lists tape indices of messages
    /// broadcast at event `k - 1`, with entry `0` holding the initialization
    /// broadcast. This is the order in which the synchronous replay scatters
    /// payloads into its delay chains.
    pub fn sends_by_spray_event(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.events.len() + 1];
        for (id, m) in self.messages.iter().enumerate() {
            let spray = (m.send_event + 1) as usize;
            if spray < out.len() {
                out[spray].push(id as u32);
            }
        }
        out
    }

    /// Walks full per-player states event by event. The callback receives
    /// the event index and post-event `(actions, masses, weights, counters)`.
    pub fn scan_states(
        &self,
        mut cb: impl FnMut(usize, &ActionVector, &[Vec<f64>], &[f64], &[u64]),
    ) {
        let n = self.players;
        let mut actions = self.init_actions.clone();
        let mut masses: Vec<Vec<f64>> = (0..n).map(|i| actions.block(i).to_vec()).collect();
        let mut weights = vec![1.0f64; n];
        let mut counters = vec![0u64; n];
        for (k, ev) in self.events.iter().enumerate() {
            for act in &ev.activations {
                let i = act.player as usize;
                actions.block_mut(i).copy_from_slice(&act.action);
                masses[i].copy_from_slice(&act.mass);
                weights[i] = act.weight;
                counters[i] = act.counter;
            }
            cb(k, &actions, &masses, &weights, &counters);
        }
    }
}

/// Read-only view handed to observers after every event.
pub struct EventView<'a> {
    pub index: usize,
    pub time_us: u64,
    pub activated: &'a [usize],
    /// Block mean of the actions before this event.
    pub pre_mean: &'a [f64],
    pub actions: &'a ActionVector,
    /// Standing push-sum mass per player.
    pub masses: &'a [Vec<f64>],
    /// Standing push-sum weight per player.
    pub weights: &'a [f64],
}

pub trait SimObserver {
    fn on_event(&mut self, view: &EventView<'_>);
}

struct NoObserver;

impl SimObserver for NoObserver {
    fn on_event(&mut self, _view: &EventView<'_>) {}
}

struct BufEntry {
    msg_id: u32,
    mass_share: Vec<f64>,
    weight_share: f64,
    counter: u64,
}

/// Reception buffer of one player: arrived shares plus the held share of the
/// player's own last broadcast. Only the sum of shares, the sum of weights
/// and the freshest counter leave it, but entries are kept until the drain
/// and summed in send order, so every float in the run has one canonical
/// evaluation order that the synchronous replay reproduces.
struct Buffer {
    entries: Vec<BufEntry>,
    own: Option<BufEntry>,
}

impl Buffer {
    fn new() -> Self {
        Self {
            entries: Vec::new(),
            own: None,
        }
    }

    /// True when nothing has arrived since the last drain. The held own
    /// share does not count: it carries no new information.
    fn has_no_arrivals(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sums all entries (own share included) in tape order:
    /// `(mass, weight, max counter, msg ids)`.
    fn drain(&mut self, block: usize) -> (Vec<f64>, f64, u64, Vec<u32>) {
        if let Some(own) = self.own.take() {
            self.entries.push(own);
        }
        self.entries.sort_unstable_by_key(|e| e.msg_id);
        let mut mass = vec![0.0; block];
        let mut weight = 0.0;
        let mut counter_max = 0u64;
        let mut ids = Vec::with_capacity(self.entries.len());
        for e in self.entries.drain(..) {
            for (acc, v) in mass.iter_mut().zip(&e.mass_share) {
                *acc += *v;
            }
            weight += e.weight_share;
            counter_max = counter_max.max(e.counter);
            ids.push(e.msg_id);
        }
        (mass, weight, counter_max, ids)
    }
}

struct Delivery {
    time_us: u64,
    seq: u64,
    receiver: u32,
    msg_id: u32,
    mass_share: Vec<f64>,
    weight_share: f64,
    counter: u64,
}

impl PartialEq for Delivery {
    fn eq(&self, other: &Self) -> bool {
        self.time_us == other.time_us && self.seq == other.seq
    }
}
impl Eq for Delivery {}
impl PartialOrd for Delivery {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Delivery {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        (self.time_us, self.seq).cmp(&(other.time_us, other.seq))
    }
}

struct PlayerRt {
    mass: Vec<f64>,
    weight: f64,
    counter: u64,
    own_updates: u64,
    buffer: Buffer,
    timing: PlayerTiming,
    next_activation_us: u64,
    last_estimate: Option<Vec<f64>>,
}

pub fn run_simulation(
    game: &dyn AggregativeGame,
    graph: &Digraph,
    timing: &TimingModel,
    cfg: &SimConfig,
) -> Result<EventTrace, SimError> {
    run_simulation_observed(game, graph, timing, cfg, &mut NoObserver)
}

/// Runs a simulation, invoking the observer after every global event.
pub fn run_simulation_observed(
    game: &dyn AggregativeGame,
    graph: &Digraph,
    timing: &TimingModel,
    cfg: &SimConfig,
    observer: &mut dyn SimObserver,
) -> Result<EventTrace, SimError> {
    if cfg.horizon_us == 0 {
        return Err(SimError::BadHorizon);
    }
    if !timing.validate() {
        return Err(SimError::BadTiming);
    }
    if !graph.is_strongly_connected() {
        return Err(SimError::NotStronglyConnected);
    }
    let n = game.player_count();
    assert_eq!(graph.node_count(), n, "graph size must match player count");
    let p = game.block_len();
    let sync = cfg.scheme == Scheme::Synchronous;

    let mut actions = ActionVector::zeros(n, p);
    let mut players: Vec<PlayerRt> = Vec::with_capacity(n);
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let mut r = rng::stream(cfg.seed, TAG_SIM_X0, i as u64);
        let x0 = game.action_set(i).sample_feasible(&mut r);
        actions.block_mut(i).copy_from_slice(&x0);
        players.push(PlayerRt {
            mass: x0,
            weight: 1.0,
            counter: 0,
            own_updates: 0,
            buffer: Buffer::new(),
            timing: timing.player_streams(cfg.seed, i),
            next_activation_us: 0,
            last_estimate: None,
        });
    }
    let init_actions = actions.clone();

    let mut messages: Vec<MsgRecord> = Vec::new();
    let mut queue: BinaryHeap<Reverse<Delivery>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut next_msg_id = 0u32;

    // Initialization broadcast at t = 0: every player sends v/d, y/d and its
    // zero counter to all out-neighbors, holding its own share locally.
    let mut init_max_delay = 0u64;
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let inv_d = 1.0 / graph.out_degree(i) as f64;
        let share: Vec<f64> = players[i].mass.iter().map(|v| v * inv_d).collect();
        for &o in graph.out_neighbors(i) {
            let msg_id = next_msg_id;
            next_msg_id += 1;
            if cfg.record_full {
                messages.push(MsgRecord {
                    sender: i as u32,
                    receiver: o as u32,
                    send_event: -1,
                    consume_event: None,
                });
            }
            if o == i {
                players[i].buffer.own = Some(BufEntry {
                    msg_id,
                    mass_share: share.clone(),
                    weight_share: inv_d,
                    counter: 0,
                });
                continue;
            }
            let delay = players[i].timing.next_delay_us();
            init_max_delay = init_max_delay.max(delay);
            queue.push(Reverse(Delivery {
                time_us: delay,
                seq,
                receiver: o as u32,
                msg_id,
                mass_share: share.clone(),
                weight_share: inv_d,
                counter: 0,
            }));
            seq += 1;
        }
    }

    // First activations. Synchronized rounds wait for the slowest
    // computation and the slowest message of the previous exchange.
    if sync {
        let mut max_comp = 0u64;
        for pl in players.iter_mut() {
            max_comp = max_comp.max(pl.timing.next_computation_us());
        }
        let tick = max_comp + init_max_delay;
        for pl in players.iter_mut() {
            pl.next_activation_us = tick.max(1);
        }
    } else {
        for pl in players.iter_mut() {
            pl.next_activation_us = pl.timing.next_computation_us().max(1);
        }
    }

    let mut events: Vec<EventRecord> = Vec::new();
    let mut idle_per_player = vec![0u64; n];
    let mut quiet_events = 0u32;
    let mut stopped = false;
    let mut grad = vec![0.0; p];
    let mut shifted = vec![0.0; p];

    while !stopped {
        let t_next = players
            .iter()
            .map(|pl| pl.next_activation_us)
            .min()
            .expect("at least one player");
        if t_next > cfg.horizon_us {
            break;
        }
        let active: Vec<usize> = (0..n)
            .filter(|&i| players[i].next_activation_us == t_next)
            .collect();

        // Deliver everything that has arrived by this instant. Messages sent
        // by this event are enqueued afterwards and therefore consumed at a
        // later event even when their delay is zero.
        while let Some(Reverse(head)) = queue.peek() {
            if head.time_us > t_next {
                break;
            }
            let Reverse(dv) = queue.pop().expect("peeked");
            players[dv.receiver as usize].buffer.entries.push(BufEntry {
                msg_id: dv.msg_id,
                mass_share: dv.mass_share,
                weight_share: dv.weight_share,
                counter: dv.counter,
            });
        }

        let k = events.len();
        let pre_mean = actions.mean_block();
        let mut acts: Vec<Activation> = Vec::with_capacity(active.len());
        let mut activated_players: Vec<usize> = Vec::with_capacity(active.len());
        let mut event_quiet = true;

        for &i in &active {
            // A node whose only in-neighbor is itself has no external
            // sources; its own share is all the information there is.
            if players[i].buffer.has_no_arrivals() && graph.in_neighbors(i).len() > 1 {
                idle_per_player[i] += 1;
                continue;
            }
            let pl = &mut players[i];
            let (w, y, buffered_max, consumed) = pl.buffer.drain(p);
            if y < WEIGHT_FLOOR {
                return Err(SimError::WeightUnderflow {
                    player: i,
                    time_us: t_next,
                });
            }
            let mut estimate = w.clone();
            for v in estimate.iter_mut() {
                *v /= y;
            }
            let (alpha, new_counter) = match cfg.scheme {
                Scheme::Aggressive | Scheme::Synchronous => {
                    let lmax = buffered_max.max(pl.counter);
                    (
                        aggressive_stepsize(pl.counter, buffered_max, &cfg.rho),
                        lmax + 1,
                    )
                }
                Scheme::NonAdaptive => (cfg.rho.value(pl.own_updates), pl.counter + 1),
            };
            let old_action = actions.block(i).to_vec();
            let mut new_action = old_action.clone();
            let applied_alpha = if cfg.frozen_actions { 0.0 } else { alpha };
            if !cfg.frozen_actions {
                game.player_gradient(i, &old_action, &estimate, &mut grad);
                for c in 0..p {
                    shifted[c] = old_action[c] - applied_alpha * grad[c];
                }
                game.action_set(i).project_into(&shifted, &mut new_action);
            }
            let mut mass = w;
            for c in 0..p {
                mass[c] += new_action[c] - old_action[c];
            }
            if event_quiet {
                if let Some(st) = &cfg.stop {
                    let dx = math::inf_dist(&new_action, &old_action);
                    let dz = match &pl.last_estimate {
                        Some(prev) => math::inf_dist(&estimate, prev),
                        None => f64::INFINITY,
                    };
                    if dx > st.eps_action || dz > st.eps_estimate {
                        event_quiet = false;
                    }
                }
            }
            if cfg.record_full {
                for &mid in &consumed {
                    messages[mid as usize].consume_event = Some(k as u32);
                }
            }
            pl.mass = mass.clone();
            pl.weight = y;
            pl.counter = new_counter;
            pl.own_updates += 1;
            pl.last_estimate = Some(estimate.clone());
            actions.block_mut(i).copy_from_slice(&new_action);
            activated_players.push(i);
            acts.push(Activation {
                player: i as u32,
                alpha: applied_alpha,
                estimate,
                buffered_max,
                consumed,
                action: new_action,
                mass,
                weight: y,
                counter: new_counter,
            });
        }

        let mut event_max_delay = 0u64;
        if !activated_players.is_empty() {
            for &i in &activated_players {
                let inv_d = 1.0 / graph.out_degree(i) as f64;
                let share: Vec<f64> = players[i].mass.iter().map(|v| v * inv_d).collect();
                let weight_share = players[i].weight * inv_d;
                let counter = players[i].counter;
                for &o in graph.out_neighbors(i) {
                    let msg_id = next_msg_id;
                    next_msg_id += 1;
                    if cfg.record_full {
                        messages.push(MsgRecord {
                            sender: i as u32,
                            receiver: o as u32,
                            send_event: k as i64,
                            consume_event: None,
                        });
                    }
                    if o == i {
                        players[i].buffer.own = Some(BufEntry {
                            msg_id,
                            mass_share: share.clone(),
                            weight_share,
                            counter,
                        });
                        continue;
                    }
                    let delay = players[i].timing.next_delay_us();
                    event_max_delay = event_max_delay.max(delay);
                    queue.push(Reverse(Delivery {
                        time_us: t_next + delay,
                        seq,
                        receiver: o as u32,
                        msg_id,
                        mass_share: share.clone(),
                        weight_share,
                        counter,
                    }));
                    seq += 1;
                }
            }

            events.push(EventRecord {
                time_us: t_next,
                activations: if cfg.record_full { acts } else { Vec::new() },
            });
            let masses: Vec<Vec<f64>> = players.iter().map(|pl| pl.mass.clone()).collect();
            let weights: Vec<f64> = players.iter().map(|pl| pl.weight).collect();
            observer.on_event(&EventView {
                index: k,
                time_us: t_next,
                activated: &activated_players,
                pre_mean: &pre_mean,
                actions: &actions,
                masses: &masses,
                weights: &weights,
            });

            if let Some(st) = &cfg.stop {
                if event_quiet {
                    quiet_events += 1;
                } else {
                    quiet_events = 0;
                }
                if quiet_events >= st.window {
                    stopped = true;
                }
            }
        }

        // Reschedule.
        if sync {
            let mut max_comp = 0u64;
            for pl in players.iter_mut() {
                max_comp = max_comp.max(pl.timing.next_computation_us());
            }
            let tick = t_next + max_comp + event_max_delay;
            for pl in players.iter_mut() {
                pl.next_activation_us = tick;
            }
        } else {
            for &i in &active {
                let gap = players[i].timing.next_computation_us();
                players[i].next_activation_us = t_next + gap;
            }
        }
    }

    let bounds = RealizedBounds::from_model_n(timing, cfg.scheme, n);

    Ok(EventTrace {
        players: n,
        block: p,
        scheme: cfg.scheme,
        rho: cfg.rho,
        seed: cfg.seed,
        horizon_us: cfg.horizon_us,
        frozen: cfg.frozen_actions,
        graph: graph.clone(),
        bounds,
        init_actions,
        events,
        messages,
        idle_polls: IdlePolls {
            total: idle_per_player.iter().sum(),
            per_player: idle_per_player,
        },
        final_actions: actions,
    })
}
