//! Plain-text event trace files.
//!
//! A trace file is self-contained: a header with the exact run configuration
//! and the generated instance, then one line per global event. Floats use
//! the shortest round-trip decimal form, so parsing a file reproduces the
//! recorded run bit for bit, and regenerating the run from the header's
//! `(config, seed)` reproduces the file.
//!
//! Event line layout (all space-separated, players 0-based):
//!
//! ```text
//! k t_us na <activated...> <alpha...> <buffered_max...>
//!   {z blocks, p floats per activated}
//!   {x blocks, p floats per player} {v blocks, p floats per player}
//!   {y per player} {l per player}
//!   {per activated: count, then count sender:send_event pairs}
//! ```
//!
//! `x`, `v`, `y`, `l` cover every player; `alpha`, `z` and the consumption
//! list cover the activated ones in line order. The consumption pairs name
//! each drained message by sender and send event (`-1` is the initialization
//! broadcast), which identifies it uniquely for a given receiver.

use std::fmt;

use aggsim_core::cournot::{params_from_text, params_to_text, CournotParams};
use aggsim_core::engine::{
    Activation, EventRecord, EventTrace, MsgRecord, RealizedBounds, SimConfig,
};
use aggsim_core::game::ActionVector;
use aggsim_core::topology::Digraph;

use crate::config::ExperimentConfig;

pub const TRACE_HEADER: &str = "aggsim-trace v1";

/// Serializes a full trace with its config header.
pub fn trace_to_text(cfg: &ExperimentConfig, trace: &EventTrace) -> String {
    let mut s = String::new();
    s.push_str(TRACE_HEADER);
    s.push('\n');
    s.push_str("## config\n");
    let mut cfg = cfg.clone();
    cfg.runs = 1;
    for line in cfg.to_text().lines() {
        s.push_str(line);
        s.push('\n');
    }
    s.push_str(&format!("run_seed_value = {}\n", trace.seed));
    s.push_str("## instance\n");
    s.push_str(&params_to_text(&generate_params(&cfg)));
    s.push_str("## init\n");
    for v in trace.init_actions.as_slice() {
        s.push_str(&format!("{v} "));
    }
    s.push('\n');
    s.push_str("## events\n");
    let mut running = RunningState::new(trace);
    for (k, ev) in trace.events.iter().enumerate() {
        running.absorb(ev);
        push_event_line(&mut s, trace, k, ev, &running);
    }
    s
}

/// Post-event per-player state carried across the serialization loop.
struct RunningState {
    actions: Vec<Vec<f64>>,
    masses: Vec<Vec<f64>>,
    weights: Vec<f64>,
    counters: Vec<u64>,
}

impl RunningState {
    fn new(trace: &EventTrace) -> Self {
        let actions: Vec<Vec<f64>> = (0..trace.players)
            .map(|i| trace.init_actions.block(i).to_vec())
            .collect();
        Self {
            masses: actions.clone(),
            actions,
            weights: vec![1.0; trace.players],
            counters: vec![0; trace.players],
        }
    }

    fn absorb(&mut self, ev: &EventRecord) {
        for a in &ev.activations {
            let i = a.player as usize;
            self.actions[i].copy_from_slice(&a.action);
            self.masses[i].copy_from_slice(&a.mass);
            self.weights[i] = a.weight;
            self.counters[i] = a.counter;
        }
    }
}

fn generate_params(cfg: &ExperimentConfig) -> CournotParams {
    aggsim_core::cournot::generate_instance(cfg.players, cfg.markets, cfg.instance_seed)
}

fn push_event_line(
    s: &mut String,
    trace: &EventTrace,
    k: usize,
    ev: &EventRecord,
    state: &RunningState,
) {
    use std::fmt::Write;
    write!(s, "{} {} {}", k, ev.time_us, ev.activations.len()).unwrap();
    for a in &ev.activations {
        write!(s, " {}", a.player).unwrap();
    }
    for a in &ev.activations {
        write!(s, " {}", a.alpha).unwrap();
    }
    for a in &ev.activations {
        write!(s, " {}", a.buffered_max).unwrap();
    }
    for a in &ev.activations {
        for v in &a.estimate {
            write!(s, " {v}").unwrap();
        }
    }
    // Per-player sections cover everyone; idle players carry their values
    // from the previous event.
    for b in &state.actions {
        for v in b {
            write!(s, " {v}").unwrap();
        }
    }
    for b in &state.masses {
        for v in b {
            write!(s, " {v}").unwrap();
        }
    }
    for w in &state.weights {
        write!(s, " {w}").unwrap();
    }
    for c in &state.counters {
        write!(s, " {c}").unwrap();
    }
    for a in &ev.activations {
        write!(s, " {}", a.consumed.len()).unwrap();
        for &mid in &a.consumed {
            let m = &trace.messages[mid as usize];
            write!(s, " {}:{}", m.sender, m.send_event).unwrap();
        }
    }
    s.push('\n');
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceParseError {
    BadHeader,
    BadSection { name: &'static str },
    BadLine { line: usize, reason: String },
    Config(String),
    Instance(String),
}

impl fmt::Display for TraceParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceParseError::BadHeader => write!(f, "not an aggsim-trace v1 file"),
            TraceParseError::BadSection { name } => write!(f, "missing section `{name}`"),
            TraceParseError::BadLine { line, reason } => {
                write!(f, "trace line {line}: {reason}")
            }
            TraceParseError::Config(e) => write!(f, "config header: {e}"),
            TraceParseError::Instance(e) => write!(f, "instance header: {e}"),
        }
    }
}

impl std::error::Error for TraceParseError {}

pub struct ParsedTrace {
    pub config: ExperimentConfig,
    pub run_seed: u64,
    pub params: CournotParams,
    pub trace: EventTrace,
}

fn take<'s>(
    toks: &mut std::str::SplitWhitespace<'s>,
    ln: usize,
    name: &str,
) -> Result<&'s str, TraceParseError> {
    toks.next().ok_or_else(|| TraceParseError::BadLine {
        line: ln + 1,
        reason: format!("missing {name}"),
    })
}

/// Parses a trace file back into a full in-memory trace. The message tape is
/// reconstructed from the graph and the recorded consumption pairs.
pub fn trace_from_text(text: &str) -> Result<ParsedTrace, TraceParseError> {
    let mut lines = text.lines().enumerate().peekable();
    let (_, header) = lines.next().ok_or(TraceParseError::BadHeader)?;
    if header.trim() != TRACE_HEADER {
        return Err(TraceParseError::BadHeader);
    }
    expect_section(&mut lines, "## config")?;
    let mut config_text = String::new();
    let mut run_seed = None;
    while let Some(&(_, l)) = lines.peek() {
        if l.starts_with("##") {
            break;
        }
        let (_, l) = lines.next().unwrap();
        if let Some(rest) = l.trim().strip_prefix("run_seed_value =") {
            run_seed = rest.trim().parse::<u64>().ok();
        } else {
            config_text.push_str(l);
            config_text.push('\n');
        }
    }
    let config = ExperimentConfig::parse(&config_text)
        .map_err(|e| TraceParseError::Config(e.to_string()))?;
    let run_seed = run_seed.ok_or(TraceParseError::BadSection {
        name: "run_seed_value",
    })?;

    expect_section(&mut lines, "## instance")?;
    let mut instance_text = String::new();
    while let Some(&(_, l)) = lines.peek() {
        if l.starts_with("##") {
            break;
        }
        instance_text.push_str(lines.next().unwrap().1);
        instance_text.push('\n');
    }
    let params =
        params_from_text(&instance_text).map_err(|e| TraceParseError::Instance(e.to_string()))?;

    expect_section(&mut lines, "## init")?;
    let n = config.players;
    let p = 2 * config.markets;
    let (init_ln, init_line) = lines
        .next()
        .ok_or(TraceParseError::BadSection { name: "## init" })?;
    let init_vals: Vec<f64> = init_line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| TraceParseError::BadLine {
            line: init_ln + 1,
            reason: "bad float in init".into(),
        })?;
    if init_vals.len() != n * p {
        return Err(TraceParseError::BadLine {
            line: init_ln + 1,
            reason: format!("init has {} values, expected {}", init_vals.len(), n * p),
        });
    }
    let init_actions = ActionVector::from_stacked(n, p, init_vals);

    expect_section(&mut lines, "## events")?;
    let graph = Digraph::generate(config.topology, n)
        .map_err(|e| TraceParseError::Config(e.to_string()))?;

    // Message tape in engine order: the initialization broadcast, then per
    // event the broadcasts of its activated players (ascending player id,
    // receivers ascending).
    let mut messages: Vec<MsgRecord> = Vec::new();
    let mut index: std::collections::HashMap<(u32, i64, u32), u32> =
        std::collections::HashMap::new();
    let push_sends = |messages: &mut Vec<MsgRecord>,
                      index: &mut std::collections::HashMap<(u32, i64, u32), u32>,
                      sender: usize,
                      send_event: i64| {
        for &o in graph.out_neighbors(sender) {
            let id = messages.len() as u32;
            messages.push(MsgRecord {
                sender: sender as u32,
                receiver: o as u32,
                send_event,
                consume_event: None,
            });
            index.insert((sender as u32, send_event, o as u32), id);
        }
    };
    for i in 0..n {
        push_sends(&mut messages, &mut index, i, -1);
    }

    let mut events: Vec<EventRecord> = Vec::new();
    let mut prev_time: Option<u64> = None;
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |reason: &str| TraceParseError::BadLine {
            line: ln + 1,
            reason: reason.to_string(),
        };
        let mut toks = line.split_whitespace();
        let k: usize = take(&mut toks, ln, "k")?
            .parse()
            .map_err(|_| bad("bad k"))?;
        if k != events.len() {
            return Err(bad("event index out of order"));
        }
        let t_us: u64 = take(&mut toks, ln, "t")?
            .parse()
            .map_err(|_| bad("bad t"))?;
        if let Some(pt) = prev_time {
            if t_us <= pt {
                return Err(bad("time not increasing"));
            }
        }
        prev_time = Some(t_us);
        let na: usize = take(&mut toks, ln, "na")?
            .parse()
            .map_err(|_| bad("bad count"))?;
        let mut players_: Vec<u32> = Vec::with_capacity(na);
        for _ in 0..na {
            players_.push(
                take(&mut toks, ln, "player")?
                    .parse()
                    .map_err(|_| bad("bad player"))?,
            );
        }
        let mut alphas = Vec::with_capacity(na);
        for _ in 0..na {
            alphas.push(
                take(&mut toks, ln, "alpha")?
                    .parse::<f64>()
                    .map_err(|_| bad("bad alpha"))?,
            );
        }
        let mut buffered = Vec::with_capacity(na);
        for _ in 0..na {
            buffered.push(
                take(&mut toks, ln, "buffered_max")?
                    .parse::<u64>()
                    .map_err(|_| bad("bad buffered_max"))?,
            );
        }
        let mut estimates = Vec::with_capacity(na);
        for _ in 0..na {
            let mut z = Vec::with_capacity(p);
            for _ in 0..p {
                z.push(
                    take(&mut toks, ln, "z")?
                        .parse::<f64>()
                        .map_err(|_| bad("bad z"))?,
                );
            }
            estimates.push(z);
        }
        let read_blocks = |toks: &mut std::str::SplitWhitespace,
                           what: &'static str|
         -> Result<Vec<Vec<f64>>, TraceParseError> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut b = Vec::with_capacity(p);
                for _ in 0..p {
                    b.push(take(toks, ln, what)?.parse::<f64>().map_err(|_| {
                        TraceParseError::BadLine {
                            line: ln + 1,
                            reason: format!("bad {what}"),
                        }
                    })?);
                }
                out.push(b);
            }
            Ok(out)
        };
        let actions = read_blocks(&mut toks, "x")?;
        let masses = read_blocks(&mut toks, "v")?;
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push(
                take(&mut toks, ln, "y")?
                    .parse::<f64>()
                    .map_err(|_| bad("bad y"))?,
            );
        }
        let mut counters = Vec::with_capacity(n);
        for _ in 0..n {
            counters.push(
                take(&mut toks, ln, "l")?
                    .parse::<u64>()
                    .map_err(|_| bad("bad l"))?,
            );
        }
        let mut activations = Vec::with_capacity(na);
        for a_idx in 0..na {
            let cnt: usize = take(&mut toks, ln, "consumed count")?
                .parse()
                .map_err(|_| bad("bad consumed count"))?;
            let receiver = players_[a_idx];
            let mut consumed = Vec::with_capacity(cnt);
            for _ in 0..cnt {
                let pair = take(&mut toks, ln, "consumed pair")?;
                let (snd, sev) = pair.split_once(':').ok_or_else(|| bad("bad pair"))?;
                let sender: u32 = snd.parse().map_err(|_| bad("bad pair sender"))?;
                let send_event: i64 = sev.parse().map_err(|_| bad("bad pair event"))?;
                let id = *index
                    .get(&(sender, send_event, receiver))
                    .ok_or_else(|| bad("consumption names unknown message"))?;
                if messages[id as usize].consume_event.is_some() {
                    return Err(bad("message consumed twice"));
                }
                messages[id as usize].consume_event = Some(k as u32);
                consumed.push(id);
            }
            let i = receiver as usize;
            activations.push(Activation {
                player: receiver,
                alpha: alphas[a_idx],
                estimate: estimates[a_idx].clone(),
                buffered_max: buffered[a_idx],
                consumed,
                action: actions[i].clone(),
                mass: masses[i].clone(),
                weight: weights[i],
                counter: counters[i],
            });
        }
        if toks.next().is_some() {
            return Err(bad("trailing tokens"));
        }
        // Broadcasts of this event extend the tape.
        for a in &activations {
            push_sends(&mut messages, &mut index, a.player as usize, k as i64);
        }
        events.push(EventRecord {
            time_us: t_us,
            activations,
        });
    }

    let timing = config.timing_model();
    let final_actions = {
        let mut x = init_actions.clone();
        for ev in &events {
            for a in &ev.activations {
                x.block_mut(a.player as usize).copy_from_slice(&a.action);
            }
        }
        x
    };
    let trace = EventTrace {
        players: n,
        block: p,
        scheme: config.scheme,
        rho: config.rho,
        seed: run_seed,
        horizon_us: config.horizon_us(),
        frozen: config.frozen,
        graph,
        bounds: RealizedBounds::from_model_n(&timing, config.scheme, n),
        init_actions,
        events,
        messages,
        idle_polls: Default::default(),
        final_actions,
    };
    Ok(ParsedTrace {
        config,
        run_seed,
        params,
        trace,
    })
}

fn expect_section<'a>(
    lines: &mut std::iter::Peekable<impl Iterator<Item = (usize, &'a str)>>,
    name: &'static str,
) -> Result<(), TraceParseError> {
    match lines.next() {
        Some((_, l)) if l.trim() == name => Ok(()),
        _ => Err(TraceParseError::BadSection { name }),
    }
}

/// Simulation config equivalent to a trace header, for regeneration.
pub fn sim_config_of(parsed: &ParsedTrace) -> SimConfig {
    let mut sim = SimConfig::new(
        parsed.config.scheme,
        parsed.config.rho,
        parsed.config.horizon_us(),
        parsed.run_seed,
    );
    sim.frozen_actions = parsed.config.frozen;
    sim.record_full = true;
    sim
}

#[cfg(test)]
#[allow(clippy::field_reassign_with_default)]
mod tests {
    use super::*;
    use aggsim_core::cournot::CournotGame;
    use aggsim_core::engine::run_simulation;

    fn small_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.players = 3;
        cfg.markets = 1;
        cfg.instance_seed = 11;
        cfg.topology = aggsim_core::topology::TopologyKind::Cycle;
        cfg.horizon_ms = 100;
        cfg.comp_mean_base_ms = 1.0;
        cfg.comp_mean_sigma_ms = 2.0;
        cfg.comp_min_us = 500;
        cfg.comp_max_us = 8_000;
        cfg.delay_mean_ms = 1.0;
        cfg.delay_min_us = 100;
        cfg.delay_max_us = 4_000;
        cfg
    }

    #[test]
    fn trace_round_trips_exactly() {
        let cfg = small_cfg();
        let game = CournotGame::new(aggsim_core::cournot::generate_instance(
            cfg.players,
            cfg.markets,
            cfg.instance_seed,
        ));
        let graph = Digraph::generate(cfg.topology, cfg.players).unwrap();
        let sim = SimConfig::new(cfg.scheme, cfg.rho, cfg.horizon_us(), 42);
        let trace = run_simulation(&game, &graph, &cfg.timing_model(), &sim).unwrap();
        let text = trace_to_text(&cfg, &trace);
        let parsed = trace_from_text(&text).unwrap();
        assert_eq!(parsed.run_seed, 42);
        assert_eq!(parsed.trace.players, trace.players);
        assert_eq!(parsed.trace.init_actions, trace.init_actions);
        assert_eq!(parsed.trace.events, trace.events);
        assert_eq!(parsed.trace.messages, trace.messages);
        assert_eq!(parsed.trace.final_actions, trace.final_actions);
        // Re-serialization is byte-identical.
        let text2 = trace_to_text(&parsed.config, &parsed.trace);
        assert_eq!(text, text2);
    }

    #[test]
    fn malformed_files_report_line() {
        let cfg = small_cfg();
        let game = CournotGame::new(aggsim_core::cournot::generate_instance(
            cfg.players,
            cfg.markets,
            cfg.instance_seed,
        ));
        let graph = Digraph::generate(cfg.topology, cfg.players).unwrap();
        let sim = SimConfig::new(cfg.scheme, cfg.rho, cfg.horizon_us(), 42);
        let trace = run_simulation(&game, &graph, &cfg.timing_model(), &sim).unwrap();
        let text = trace_to_text(&cfg, &trace);
        let broken = text.replace("## events\n0 ", "## events\nx ");
        match trace_from_text(&broken) {
            Err(TraceParseError::BadLine { .. }) => {}
            Err(other) => panic!("expected BadLine, got {other:?}"),
            Ok(_) => panic!("expected BadLine, parse succeeded"),
        }
        assert!(trace_from_text("garbage").is_err());
    }
}
