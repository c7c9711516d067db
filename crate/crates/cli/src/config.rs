//! Experiment configuration: a plain-text `key = value` file, `#` comments,
//! unknown keys rejected. Every byte of campaign output is a function of the
//! parsed configuration.
//!
//! Recognized keys and defaults:
//!
//! | key                  | default     | meaning                                        |
//! |----------------------|-------------|------------------------------------------------|
//! | `players`            | `20`        | number of firms                                |
//! | `markets`            | `10`        | markets per firm (block dimension is twice it) |
//! | `instance_seed`      | `1`         | seed of the generated instance                 |
//! | `topology`           | `log`       | `cycle`, `star`, `log` or `complete`           |
//! | `scheme`             | `aggressive`| `aggressive`, `nonadaptive` or `synchronous`   |
//! | `rho`                | `constant:0.002` | stepsize schedule, or `power:RHO0,GAMMA`  |
//! | `horizon_ms`         | `40000`     | simulated horizon in milliseconds              |
//! | `runs`               | `50`        | Monte-Carlo repetitions                        |
//! | `base_seed`          | `1`         | base seed; run `r` derives its own seed        |
//! | `comp_mean_base_ms`  | `1`         | base of the per-player mean computation time   |
//! | `comp_mean_sigma_ms` | `5`         | spread of the per-player mean computation time |
//! | `comp_min_us`        | `100`       | computation-time truncation window, lower      |
//! | `comp_max_us`        | `100000`    | computation-time truncation window, upper      |
//! | `delay_mean_ms`      | `5`         | mean message delay                             |
//! | `delay_min_us`       | `100`       | delay truncation window, lower                 |
//! | `delay_max_us`       | `100000`    | delay truncation window, upper                 |
//! | `frozen`             | `false`     | disable optimization (consensus only)          |
//! | `dump_traces`        | `false`     | write a full event trace per run               |
//! | `grid_points`        | `1000`      | samples of the common time grid                |
//! | `ne_tol`             | `1e-8`      | reference-equilibrium solver tolerance         |
//! | `workers`            | `1`         | concurrent runs                                |
//! | `out`                | `out`       | output directory                               |

use std::fmt;
use std::path::PathBuf;

use aggsim_core::engine::Scheme;
use aggsim_core::stepsize::StepsizeSchedule;
use aggsim_core::timing::TimingModel;
use aggsim_core::topology::TopologyKind;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub players: usize,
    pub markets: usize,
    pub instance_seed: u64,
    pub topology: TopologyKind,
    pub scheme: Scheme,
    pub rho: StepsizeSchedule,
    pub horizon_ms: u64,
    pub runs: usize,
    pub base_seed: u64,
    pub comp_mean_base_ms: f64,
    pub comp_mean_sigma_ms: f64,
    pub comp_min_us: u64,
    pub comp_max_us: u64,
    pub delay_mean_ms: f64,
    pub delay_min_us: u64,
    pub delay_max_us: u64,
    pub frozen: bool,
    pub dump_traces: bool,
    pub grid_points: usize,
    pub ne_tol: f64,
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            players: 20,
            markets: 10,
            instance_seed: 1,
            topology: TopologyKind::Log,
            scheme: Scheme::Aggressive,
            rho: StepsizeSchedule::Constant { rho: 0.002 },
            horizon_ms: 40_000,
            runs: 50,
            base_seed: 1,
            comp_mean_base_ms: 1.0,
            comp_mean_sigma_ms: 5.0,
            comp_min_us: 100,
            comp_max_us: 100_000,
            delay_mean_ms: 5.0,
            delay_min_us: 100,
            delay_max_us: 100_000,
            frozen: false,
            dump_traces: false,
            grid_points: 1000,
            ne_tol: 1e-8,
            workers: 1,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    UnknownKey {
        line: usize,
        key: String,
    },
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    MissingEquals {
        line: usize,
    },
    BadOverride {
        spec: String,
    },
    Invalid {
        reason: String,
    },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey { line, key } => {
                write!(f, "line {line}: unknown key `{key}`")
            }
            ConfigError::BadValue { line, key, value } => {
                write!(f, "line {line}: bad value `{value}` for `{key}`")
            }
            ConfigError::MissingEquals { line } => {
                write!(f, "line {line}: expected `key = value`")
            }
            ConfigError::BadOverride { spec } => {
                write!(f, "override `{spec}` is not KEY=VALUE")
            }
            ConfigError::Invalid { reason } => write!(f, "invalid configuration: {reason}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_rho(value: &str) -> Option<StepsizeSchedule> {
    if let Some(rest) = value.strip_prefix("constant:") {
        return StepsizeSchedule::constant(rest.trim().parse().ok()?).ok();
    }
    if let Some(rest) = value.strip_prefix("power:") {
        let mut it = rest.split(',');
        let rho0: f64 = it.next()?.trim().parse().ok()?;
        let gamma: f64 = it.next()?.trim().parse().ok()?;
        if it.next().is_some() {
            return None;
        }
        return StepsizeSchedule::power(rho0, gamma).ok();
    }
    None
}

pub fn rho_to_string(rho: &StepsizeSchedule) -> String {
    match rho {
        StepsizeSchedule::Constant { rho } => format!("constant:{rho}"),
        StepsizeSchedule::Power { rho0, gamma } => format!("power:{rho0},{gamma}"),
    }
}

impl ExperimentConfig {
    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "players" => self.players = value.parse().map_err(|_| bad())?,
            "markets" => self.markets = value.parse().map_err(|_| bad())?,
            "instance_seed" => self.instance_seed = value.parse().map_err(|_| bad())?,
            "topology" => self.topology = TopologyKind::parse(value).map_err(|_| bad())?,
            "scheme" => self.scheme = Scheme::parse(value).ok_or_else(bad)?,
            "rho" => self.rho = parse_rho(value).ok_or_else(bad)?,
            "horizon_ms" => self.horizon_ms = value.parse().map_err(|_| bad())?,
            "runs" => self.runs = value.parse().map_err(|_| bad())?,
            "base_seed" => self.base_seed = value.parse().map_err(|_| bad())?,
            "comp_mean_base_ms" => self.comp_mean_base_ms = value.parse().map_err(|_| bad())?,
            "comp_mean_sigma_ms" => self.comp_mean_sigma_ms = value.parse().map_err(|_| bad())?,
            "comp_min_us" => self.comp_min_us = value.parse().map_err(|_| bad())?,
            "comp_max_us" => self.comp_max_us = value.parse().map_err(|_| bad())?,
            "delay_mean_ms" => self.delay_mean_ms = value.parse().map_err(|_| bad())?,
            "delay_min_us" => self.delay_min_us = value.parse().map_err(|_| bad())?,
            "delay_max_us" => self.delay_max_us = value.parse().map_err(|_| bad())?,
            "frozen" => self.frozen = value.parse().map_err(|_| bad())?,
            "dump_traces" => self.dump_traces = value.parse().map_err(|_| bad())?,
            "grid_points" => self.grid_points = value.parse().map_err(|_| bad())?,
            "ne_tol" => self.ne_tol = value.parse().map_err(|_| bad())?,
            "workers" => self.workers = value.parse().map_err(|_| bad())?,
            "out" => self.out = PathBuf::from(value),
            _ => {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.to_string(),
                })
            }
        }
        Ok(())
    }

    /// Parses config text, starting from the defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or(ConfigError::MissingEquals { line })?;
            cfg.apply(key.trim(), value.trim(), line)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `KEY=VALUE` overrides on top of the parsed file.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), ConfigError> {
        for spec in overrides {
            let (key, value) = spec
                .split_once('=')
                .ok_or_else(|| ConfigError::BadOverride { spec: spec.clone() })?;
            self.apply(key.trim(), value.trim(), 0)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |reason: &str| {
            Err(ConfigError::Invalid {
                reason: reason.to_string(),
            })
        };
        if self.players == 0 || self.markets == 0 {
            return fail("players and markets must be positive");
        }
        if self.runs == 0 {
            return fail("need at least one run");
        }
        if self.horizon_ms == 0 {
            return fail("horizon must be positive");
        }
        if self.grid_points < 2 {
            return fail("need at least two grid points");
        }
        if self.workers == 0 {
            return fail("need at least one worker");
        }
        if !self.ne_tol.is_finite() || self.ne_tol <= 0.0 {
            return fail("ne_tol must be positive");
        }
        if !self.timing_model().validate() {
            return fail("timing windows must be positive and ordered");
        }
        Ok(())
    }

    pub fn timing_model(&self) -> TimingModel {
        TimingModel {
            comp_mean_base_us: self.comp_mean_base_ms * 1_000.0,
            comp_mean_sigma_us: self.comp_mean_sigma_ms * 1_000.0,
            comp_min_us: self.comp_min_us,
            comp_max_us: self.comp_max_us,
            delay_mean_us: self.delay_mean_ms * 1_000.0,
            delay_min_us: self.delay_min_us,
            delay_max_us: self.delay_max_us,
        }
    }

    pub fn horizon_us(&self) -> u64 {
        self.horizon_ms * 1_000
    }

    /// Canonical text form; parsing it reproduces the configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("players = {}\n", self.players));
        s.push_str(&format!("markets = {}\n", self.markets));
        s.push_str(&format!("instance_seed = {}\n", self.instance_seed));
        s.push_str(&format!("topology = {}\n", self.topology.name()));
        s.push_str(&format!("scheme = {}\n", self.scheme.name()));
        s.push_str(&format!("rho = {}\n", rho_to_string(&self.rho)));
        s.push_str(&format!("horizon_ms = {}\n", self.horizon_ms));
        s.push_str(&format!("runs = {}\n", self.runs));
        s.push_str(&format!("base_seed = {}\n", self.base_seed));
        s.push_str(&format!("comp_mean_base_ms = {}\n", self.comp_mean_base_ms));
        s.push_str(&format!(
            "comp_mean_sigma_ms = {}\n",
            self.comp_mean_sigma_ms
        ));
        s.push_str(&format!("comp_min_us = {}\n", self.comp_min_us));
        s.push_str(&format!("comp_max_us = {}\n", self.comp_max_us));
        s.push_str(&format!("delay_mean_ms = {}\n", self.delay_mean_ms));
        s.push_str(&format!("delay_min_us = {}\n", self.delay_min_us));
        s.push_str(&format!("delay_max_us = {}\n", self.delay_max_us));
        s.push_str(&format!("frozen = {}\n", self.frozen));
        s.push_str(&format!("dump_traces = {}\n", self.dump_traces));
        s.push_str(&format!("grid_points = {}\n", self.grid_points));
        s.push_str(&format!("ne_tol = {}\n", self.ne_tol));
        s.push_str(&format!("workers = {}\n", self.workers));
        s.push_str(&format!("out = {}\n", self.out.display()));
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_and_bad_values_error() {
        assert!(matches!(
            ExperimentConfig::parse("nonsense = 3\n"),
            Err(ConfigError::UnknownKey { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("players = many\n"),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            ExperimentConfig::parse("players\n"),
            Err(ConfigError::MissingEquals { line: 1 })
        ));
    }

    #[test]
    fn comments_and_overrides_work() {
        let text = "# comment\nplayers = 5 # trailing\nrho = power:0.5,0.6\n";
        let mut cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.players, 5);
        assert_eq!(
            cfg.rho,
            StepsizeSchedule::Power {
                rho0: 0.5,
                gamma: 0.6
            }
        );
        cfg.apply_overrides(&["runs=3".to_string(), "scheme=synchronous".to_string()])
            .unwrap();
        assert_eq!(cfg.runs, 3);
        assert_eq!(cfg.scheme, Scheme::Synchronous);
        assert!(cfg.apply_overrides(&["badspec".to_string()]).is_err());
    }

    #[test]
    fn invalid_combinations_rejected() {
        assert!(ExperimentConfig::parse("runs = 0\n").is_err());
        assert!(ExperimentConfig::parse("comp_min_us = 9\ncomp_max_us = 3\n").is_err());
        assert!(ExperimentConfig::parse("rho = power:0.5,0.4\n").is_err());
    }
}
