//! Experiment harness: calibration, skill learning, sweeps, sequencing and
//! sliding scenarios on the simulated hand, with CSV reports and plot
//! scripts.

pub mod error;
pub mod paced;
pub mod plots;
pub mod report;
pub mod scenarios;
pub mod sequence;
pub mod settings;
pub mod slide;
pub mod workflow;

use std::path::Path;

pub use error::{HarnessError, Result};
pub use report::SummaryRow;
pub use scenarios::Scenario;
pub use settings::ScenarioConfig;
pub use workflow::Context;

/// Exit status of a finished scenario.
pub fn exit_code(rows: &[SummaryRow]) -> i32 {
    if rows.iter().all(|r| r.success) {
        0
    } else {
        1
    }
}

/// Runs a scenario and writes `summary.csv` and the plot scripts into
/// `ctx.out`. A scenario that aborts still leaves a single failure row.
pub fn execute(scenario: Scenario, ctx: &Context) -> Result<Vec<SummaryRow>> {
    std::fs::create_dir_all(&ctx.out)?;
    let result = scenarios::run(scenario, ctx);
    let rows = match &result {
        Ok(rows) => rows.clone(),
        Err(e) => vec![SummaryRow::failed(scenario.id(), "scenario", "error").with_note("error", e.to_string().replace(';', ","))],
    };
    report::write_summary(&ctx.out.join("summary.csv"), &rows)?;
    plots::emit_plots(&ctx.out)?;
    result
}

/// Loads the configuration, applying a seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}
