//! Directed communication graphs: the four benchmark generators, strong
//! connectivity, and the staleness constants implied by bounded message
//! delays and bounded activation gaps.
//!
//! Neighbor sets follow the push-sum convention that every node is its own
//! in- and out-neighbor, so the out-degree `d_i` counts the self loop and a
//! node always retains a `1/d_i` share of its own broadcast.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Graph kinds used by the experiment campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    /// One in- and one out-neighbor per node.
    Cycle,
    /// Bidirectional hub at node 0.
    Star,
    /// Node `i` (1-based) sends to `mod(2^j + i, n) + 1` for `0 <= j < log2 n`.
    Log,
    /// Every ordered pair.
    Complete,
}

impl TopologyKind {
    pub fn parse(s: &str) -> Result<Self, TopologyError> {
        match s {
            "cycle" => Ok(Self::Cycle),
            "star" => Ok(Self::Star),
            "log" => Ok(Self::Log),
            "complete" => Ok(Self::Complete),
            other => Err(TopologyError::UnknownKind {
                name: String::from(other),
            }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Cycle => "cycle",
            Self::Star => "star",
            Self::Log => "log",
            Self::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologyError {
    UnknownKind { name: String },
    EmptyGraph,
    EdgeOutOfRange { from: usize, to: usize },
    BadTimingBound,
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologyError::UnknownKind { name } => write!(f, "unknown topology kind `{name}`"),
            TopologyError::EmptyGraph => write!(f, "graph needs at least one node"),
            TopologyError::EdgeOutOfRange { from, to } => {
                write!(f, "edge ({from}, {to}) out of range")
            }
            TopologyError::BadTimingBound => {
                write!(f, "timing bounds must be positive and ordered")
            }
        }
    }
}

impl core::error::Error for TopologyError {}

/// Directed graph with implicit self loops, stored as sorted out-neighbor
/// lists (self included). Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    n: usize,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
}

impl Digraph {
    /// Builds from directed edges `(from, to)`, 0-based, self loops implied.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::EmptyGraph);
        }
        let mut out: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (from, to) in edges {
            if from >= n || to >= n {
                return Err(TopologyError::EdgeOutOfRange { from, to });
            }
            if !out[from].contains(&to) {
                out[from].push(to);
            }
        }
        for list in out.iter_mut() {
            list.sort_unstable();
        }
        let mut inn: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (from, list) in out.iter().enumerate() {
            for &to in list {
                inn[to].push(from);
            }
        }
        for list in inn.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self { n, out, inn })
    }

    pub fn generate(kind: TopologyKind, n: usize) -> Result<Self, TopologyError> {
        if n == 0 {
            return Err(TopologyError::EmptyGraph);
        }
        let mut edges: Vec<(usize, usize)> = Vec::new();
        match kind {
            TopologyKind::Cycle => {
                if n > 1 {
                    for i in 0..n {
                        edges.push((i, (i + 1) % n));
                    }
                }
            }
            TopologyKind::Star => {
                for i in 1..n {
                    edges.push((0, i));
                    edges.push((i, 0));
                }
            }
            TopologyKind::Log => {
                // 1-based rule: i sends to mod(2^j + i, n) + 1 while 2^j < n.
                // Targets equal to the sender collapse into the implicit self
                // loop and are dropped.
                for i in 1..=n {
                    let mut j = 0u32;
                    while (1usize << j) < n {
                        let target = ((1usize << j) + i) % n + 1;
                        if target != i {
                            edges.push((i - 1, target - 1));
                        }
                        j += 1;
                    }
                }
            }
            TopologyKind::Complete => {
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            edges.push((i, j));
                        }
                    }
                }
            }
        }
        Self::from_edges(n, edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Out-neighbors of `i`, self included, ascending.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// In-neighbors of `i`, self included, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.inn[i]
    }

    /// Out-degree including the self loop.
    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i].len()
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.out_degree(i)).collect()
    }

    /// Strong connectivity via forward and backward reachability from node 0.
    /// Self loops are irrelevant for path existence.
    pub fn is_strongly_connected(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let reach = |adj: &Vec<Vec<usize>>| -> usize {
            let mut seen = vec![false; self.n];
            let mut stack = vec![0usize];
            seen[0] = true;
            let mut count = 1;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
            count
        };
        reach(&self.out) == self.n && reach(&self.inn) == self.n
    }

    /// Edge-list text, one `i j` pair per line, 1-based, self loops included.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, list) in self.out.iter().enumerate() {
            for &j in list {
                s.push_str(&format!("{} {}\n", i + 1, j + 1));
            }
        }
        s
    }
}

/// Staleness constants derived from the timing bounds of a run.
///
/// With activation gaps in `[gap_min, gap_max]` and message delays bounded by
/// `delay_max` (all in the same time unit):
///
/// * within any `activation_window` consecutive global events every player
///   is activated at least once;
/// * any message is consumed within `staleness` global events of its send.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelayConstants {
    /// `b1 = (n - 1) * floor(gap_max / gap_min) + 1`.
    pub activation_window: u64,
    /// `b2 = n * floor(delay_max / gap_min) + 1`.
    pub delivery_window: u64,
    /// `b = b1 + b2`.
    pub staleness: u64,
}

/// Computes the staleness constants for `n` players.
pub fn delay_constants(
    n: usize,
    delay_max: f64,
    gap_min: f64,
    gap_max: f64,
) -> Result<DelayConstants, TopologyError> {
    let gaps_ok = gap_min.is_finite() && gap_min > 0.0 && gap_max.is_finite() && gap_max >= gap_min;
    let delay_ok = delay_max.is_finite() && delay_max > 0.0;
    if n == 0 || !gaps_ok || !delay_ok {
        return Err(TopologyError::BadTimingBound);
    }
    let b1 = (n as u64 - 1) * (gap_max / gap_min) as u64 + 1;
    let b2 = n as u64 * (delay_max / gap_min) as u64 + 1;
    Ok(DelayConstants {
        activation_window: b1,
        delivery_window: b2,
        staleness: b1 + b2,
    })
}
