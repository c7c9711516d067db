//! File-level verification: parse a stored trace, run the invariant battery
//! on its contents, and check that regenerating the run from the embedded
//! `(config, seed)` reproduces the file exactly.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};

use aggsim_core::cournot::CournotGame;
use aggsim_core::engine::run_simulation;
use aggsim_core::verify::run_battery;

use crate::tracefile;

pub struct VerifyOutcome {
    pub passed: bool,
    pub report: String,
}

/// Verifies a trace file; `report` carries one line per check.
pub fn verify_file(path: &Path) -> Result<VerifyOutcome> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = tracefile::trace_from_text(&text)?;
    let game = CournotGame::new(parsed.params.clone());

    let battery = run_battery(&parsed.trace, &game);
    let mut report = String::new();
    write!(report, "{}", battery.render()).unwrap();
    let mut passed = battery.passed();

    // Determinism: the embedded (config, seed) regenerate the same bytes.
    let graph = parsed.trace.graph.clone();
    let sim = tracefile::sim_config_of(&parsed);
    match run_simulation(&game, &graph, &parsed.config.timing_model(), &sim) {
        Ok(regen) => {
            let regen_text = tracefile::trace_to_text(&parsed.config, &regen);
            if regen_text == text {
                report.push_str("PASS regeneration matches file\n");
            } else {
                passed = false;
                report.push_str("FAIL regeneration differs from file\n");
            }
        }
        Err(e) => {
            passed = false;
            writeln!(report, "FAIL regeneration: {e}").unwrap();
        }
    }

    Ok(VerifyOutcome { passed, report })
}
