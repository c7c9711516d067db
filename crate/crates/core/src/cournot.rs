//! Multi-market Cournot competition as an aggregative game.
//!
//! `n` firms compete over `L` markets. Firm `i` chooses production `g_il` and
//! sales `s_il` per market; its block is laid out market-major as
//! `(g_1, s_1, g_2, s_2, ...)` with dimension `p = 2L`. Production costs are
//! quadratic, `a_il g + b_il g^2`, and market `l` clears at price
//! `d_l - (total sales at l)`. Each firm balances total production against
//! total sales and respects per-market capacities.
//!
//! The cost evaluator takes the aggregate estimate `z` supplied by the
//! distributed iteration and reads total sales as `n * z_{s,l}`; centralized
//! callers pass the exact block mean, under which the evaluator reduces to
//! the classical Cournot cost.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::game::{ActionSet, ActionVector, AggregativeGame};
use crate::rng;

const TAG_INSTANCE: u64 = 0x636f7572;
const TAG_INIT: u64 = 0x696e6974;

/// Parameters of one generated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct CournotParams {
    pub firms: usize,
    pub markets: usize,
    /// Linear production cost coefficient per (firm, market), in `[2, 12]`.
    pub lin_cost: Vec<Vec<f64>>,
    /// Quadratic production cost coefficient per (firm, market), in `[2, 3]`.
    pub quad_cost: Vec<Vec<f64>>,
    /// Demand intercept per market, in `[90, 100]`.
    pub demand: Vec<f64>,
    /// Production capacity per (firm, market); generated as 500.
    pub capacity: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Draws an instance from the benchmark distributions, deterministically in
/// `seed`.
pub fn generate_instance(firms: usize, markets: usize, seed: u64) -> CournotParams {
    assert!(firms >= 1 && markets >= 1);
    let mut r = rng::stream(seed, TAG_INSTANCE, 0);
    let mut lin_cost = Vec::with_capacity(firms);
    let mut quad_cost = Vec::with_capacity(firms);
    let mut capacity = Vec::with_capacity(firms);
    for _ in 0..firms {
        let mut a_row = Vec::with_capacity(markets);
        let mut b_row = Vec::with_capacity(markets);
        for _ in 0..markets {
            a_row.push(rng::uniform(&mut r, 2.0, 12.0));
            b_row.push(rng::uniform(&mut r, 2.0, 3.0));
        }
        lin_cost.push(a_row);
        quad_cost.push(b_row);
        capacity.push(vec![500.0; markets]);
    }
    let demand = (0..markets)
        .map(|_| rng::uniform(&mut r, 90.0, 100.0))
        .collect();
    CournotParams {
        firms,
        markets,
        lin_cost,
        quad_cost,
        demand,
        capacity,
        seed,
    }
}

/// The instance bound to its action sets, implementing the game trait.
pub struct CournotGame {
    params: CournotParams,
    sets: Vec<ActionSet>,
}

impl CournotGame {
    pub fn new(params: CournotParams) -> Self {
        let p = 2 * params.markets;
        let mut sets = Vec::with_capacity(params.firms);
        for i in 0..params.firms {
            let mut lower = vec![0.0; p];
            let mut upper = vec![0.0; p];
            // Sales are implicitly bounded by total capacity through the
            // balance constraint; making that bound explicit keeps the box
            // compact without cutting the feasible set.
            let total_cap: f64 = params.capacity[i].iter().sum();
            let mut normal = vec![0.0; p];
            for l in 0..params.markets {
                lower[2 * l] = 0.0;
                upper[2 * l] = params.capacity[i][l];
                lower[2 * l + 1] = 0.0;
                upper[2 * l + 1] = total_cap;
                normal[2 * l] = 1.0;
                normal[2 * l + 1] = -1.0;
            }
            // Initial draws happen at production scale; the loose implied
            // sales bound stays in the set but not in the sampling window.
            let mut sample_cap = vec![0.0; p];
            for l in 0..params.markets {
                sample_cap[2 * l] = params.capacity[i][l];
                sample_cap[2 * l + 1] = params.capacity[i][l];
            }
            let set = ActionSet::bounded_box(lower, upper)
                .expect("capacity bounds are finite")
                .with_equality(normal)
                .expect("zero is feasible")
                .with_sampling_upper(sample_cap)
                .expect("sampling window inside the box");
            sets.push(set);
        }
        Self { params, sets }
    }

    pub fn params(&self) -> &CournotParams {
        &self.params
    }

    /// Feasible initial profile: uniform in the box, projected per firm.
    pub fn initial_profile(&self, seed: u64) -> ActionVector {
        let p = self.block_len();
        let mut x = ActionVector::zeros(self.params.firms, p);
        for i in 0..self.params.firms {
            let mut r = rng::stream(seed, TAG_INIT, i as u64);
            let b = self.sets[i].sample_feasible(&mut r);
            x.block_mut(i).copy_from_slice(&b);
        }
        x
    }
}

impl AggregativeGame for CournotGame {
    fn player_count(&self) -> usize {
        self.params.firms
    }

    fn block_len(&self) -> usize {
        2 * self.params.markets
    }

    fn cost(&self, player: usize, own: &[f64], aggregate: &[f64]) -> f64 {
        let p = self.block_len();
        assert_eq!(own.len(), p);
        assert_eq!(aggregate.len(), p);
        let n = self.params.firms as f64;
        let mut total = 0.0;
        for l in 0..self.params.markets {
            let g = own[2 * l];
            let s = own[2 * l + 1];
            let a = self.params.lin_cost[player][l];
            let b = self.params.quad_cost[player][l];
            let total_sales = n * aggregate[2 * l + 1];
            let price = self.params.demand[l] - total_sales;
            total += a * g + b * g * g - s * price;
        }
        total
    }

    fn player_gradient(&self, player: usize, own: &[f64], aggregate: &[f64], out: &mut [f64]) {
        let p = self.block_len();
        assert_eq!(own.len(), p);
        assert_eq!(aggregate.len(), p);
        assert_eq!(out.len(), p);
        let n = self.params.firms as f64;
        for l in 0..self.params.markets {
            let g = own[2 * l];
            let s = own[2 * l + 1];
            let a = self.params.lin_cost[player][l];
            let b = self.params.quad_cost[player][l];
            out[2 * l] = a + 2.0 * b * g;
            // d/ds of -s(d - n z_s) plus (1/n) d/dz_s, which contributes s.
            out[2 * l + 1] = -self.params.demand[l] + n * aggregate[2 * l + 1] + s;
        }
    }

    fn action_set(&self, player: usize) -> &ActionSet {
        &self.sets[player]
    }

    fn describe(&self) -> String {
        format!(
            "cournot (firms {}, markets {}, seed {})",
            self.params.firms, self.params.markets, self.params.seed
        )
    }
}

/// Failure of the centralized equilibrium solver.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    /// Iteration cap exceeded; carries the last observed residual.
    NonConvergence { residual: f64 },
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::NonConvergence { residual } => {
                write!(f, "equilibrium iteration cap hit, residual {residual:e}")
            }
        }
    }
}

impl core::error::Error for SolveError {}

const SOLVE_CAP: usize = 1_000_000;
const RESIDUAL_STEP: f64 = 0.01;

/// Centralized projected pseudo-gradient solve to fixed-point residual
/// `<= tol`, measured with the canonical residual step `0.01`.
///
/// The stepsize starts at `0.1` and halves whenever a 50-iteration window
/// fails to decrease the residual monotonically.
pub fn solve_ne(game: &CournotGame, tol: f64, init_seed: u64) -> Result<ActionVector, SolveError> {
    assert!(tol > 0.0);
    let n = game.player_count();
    let p = game.block_len();
    let mut x = game.initial_profile(init_seed);
    let mut gamma = 0.1;
    let mut window_start_res = f64::INFINITY;
    let mut window = 0usize;
    let mut last_res = f64::INFINITY;
    let mut shifted = vec![0.0; p];
    let mut proj = vec![0.0; p];
    for _ in 0..SOLVE_CAP {
        let grad = crate::game::pseudo_gradient(game, &x);
        let mut next = ActionVector::zeros(n, p);
        for i in 0..n {
            let b = x.block(i);
            for k in 0..p {
                shifted[k] = b[k] - gamma * grad[i * p + k];
            }
            game.action_set(i).project_into(&shifted, &mut proj);
            next.block_mut(i).copy_from_slice(&proj);
        }
        x = next;
        let res = crate::game::vi_residual(game, &x, RESIDUAL_STEP);
        last_res = res;
        if res <= tol {
            return Ok(x);
        }
        if !res.is_finite() {
            gamma *= 0.5;
            window = 0;
            window_start_res = f64::INFINITY;
            continue;
        }
        window += 1;
        if window == 1 {
            window_start_res = res;
        } else if window >= 50 {
            if res >= window_start_res {
                gamma *= 0.5;
            }
            window = 0;
        }
    }
    Err(SolveError::NonConvergence { residual: last_res })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseError {
    BadHeader,
    MissingField { name: &'static str },
    BadNumber { line: usize },
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::BadHeader => write!(f, "not a cournot-instance v1 record"),
            ParseError::MissingField { name } => write!(f, "missing field `{name}`"),
            ParseError::BadNumber { line } => write!(f, "unparseable number on line {line}"),
        }
    }
}

impl core::error::Error for ParseError {}

fn push_row(out: &mut String, name: &str, row: &[f64]) {
    out.push_str(name);
    for v in row {
        out.push_str(&format!(" {v}"));
    }
    out.push('\n');
}

/// Versioned plain-text record of an instance. Floats use the shortest
/// round-trip decimal form, so import reproduces the parameters bit for bit.
pub fn params_to_text(p: &CournotParams) -> String {
    let mut s = String::new();
    s.push_str("cournot-instance v1\n");
    s.push_str(&format!("firms {}\n", p.firms));
    s.push_str(&format!("markets {}\n", p.markets));
    s.push_str(&format!("seed {}\n", p.seed));
    for i in 0..p.firms {
        push_row(&mut s, "a", &p.lin_cost[i]);
    }
    for i in 0..p.firms {
        push_row(&mut s, "b", &p.quad_cost[i]);
    }
    push_row(&mut s, "d", &p.demand);
    for i in 0..p.firms {
        push_row(&mut s, "cap", &p.capacity[i]);
    }
    s
}

pub fn params_from_text(text: &str) -> Result<CournotParams, ParseError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ParseError::BadHeader)?;
    if header.trim() != "cournot-instance v1" {
        return Err(ParseError::BadHeader);
    }
    let mut firms = None;
    let mut markets = None;
    let mut seed = None;
    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b_rows: Vec<Vec<f64>> = Vec::new();
    let mut d_row: Option<Vec<f64>> = None;
    let mut cap_rows: Vec<Vec<f64>> = Vec::new();
    for (ln, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let key = parts.next().unwrap_or("");
        let rest: Vec<&str> = parts.collect();
        let parse_floats = |items: &[&str]| -> Result<Vec<f64>, ParseError> {
            items
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| ParseError::BadNumber { line: ln + 1 })
                })
                .collect()
        };
        match key {
            "firms" => {
                firms = rest.first().and_then(|t| t.parse::<usize>().ok());
            }
            "markets" => {
                markets = rest.first().and_then(|t| t.parse::<usize>().ok());
            }
            "seed" => {
                seed = rest.first().and_then(|t| t.parse::<u64>().ok());
            }
            "a" => a_rows.push(parse_floats(&rest)?),
            "b" => b_rows.push(parse_floats(&rest)?),
            "d" => d_row = Some(parse_floats(&rest)?),
            "cap" => cap_rows.push(parse_floats(&rest)?),
            _ => return Err(ParseError::BadNumber { line: ln + 1 }),
        }
    }
    let firms = firms.ok_or(ParseError::MissingField { name: "firms" })?;
    let markets = markets.ok_or(ParseError::MissingField { name: "markets" })?;
    let seed = seed.ok_or(ParseError::MissingField { name: "seed" })?;
    let demand = d_row.ok_or(ParseError::MissingField { name: "d" })?;
    if a_rows.len() != firms
        || b_rows.len() != firms
        || cap_rows.len() != firms
        || demand.len() != markets
        || a_rows.iter().any(|r| r.len() != markets)
        || b_rows.iter().any(|r| r.len() != markets)
        || cap_rows.iter().any(|r| r.len() != markets)
    {
        return Err(ParseError::MissingField { name: "rows" });
    }
    Ok(CournotParams {
        firms,
        markets,
        lin_cost: a_rows,
        quad_cost: b_rows,
        demand,
        capacity: cap_rows,
        seed,
    })
}

/// Monopoly reference: for one firm on one market, scans the feasible
/// segment `g = s` for the cost minimum. Independent of the projected
/// iteration used by [`solve_ne`].
pub fn monopoly_grid_optimum(game: &CournotGame) -> ActionVector {
    assert_eq!(game.player_count(), 1);
    assert_eq!(game.params.markets, 1);
    let cap = game.params.capacity[0][0];
    let best = crate::check::scalar_grid_minimizer(
        |t| {
            let own = [t, t];
            game.cost(0, &own, &own)
        },
        0.0,
        cap,
    );
    ActionVector::from_stacked(1, 2, vec![best, best])
}
