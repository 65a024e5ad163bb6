//! Command-line front end: config loading, trace export and summary tables
//! for scenarios, sweeps and dynamics checks.
//!
//! Exit codes: 0 success, 2 configuration error, 3 run aborted.

pub mod dynamics;
pub mod error;
pub mod output;
pub mod run;
pub mod sweep;

use std::path::Path;

pub use error::CliError;

/// Parses a scenario, sweep or dynamics config and checks it without
/// running anything. Returns a one-line description.
pub fn validate(path: &Path) -> Result<String, CliError> {
    let text = output::read_config(path)?;
    let scenario = trustgrid::sim::ScenarioConfig::from_json(&text);
    if let Ok(cfg) = &scenario {
        if let Some(case) = cfg.load_grid_from(output::config_dir(path))? {
            cfg.check_grid(&case)?;
        }
        return Ok(format!("scenario config ok: {} agents, {} malicious", cfg.n_agents, cfg.malicious.len()));
    }
    let sweep = trustgrid::sim::sweep::SweepConfig::from_json(&text);
    if let Ok(cfg) = &sweep {
        return Ok(format!("sweep config ok: {} runs", cfg.cells().len()));
    }
    let dynamics = dynamics::DynamicsConfig::from_json(&text);
    if let Ok(cfg) = &dynamics {
        return Ok(format!("dynamics config ok: {} agents, {} honest", cfg.n_agents, cfg.honest.len()));
    }
    let mut msg = String::from("not a valid scenario, sweep or dynamics config");
    for (kind, err) in [
        ("scenario", scenario.err().map(|e| e.to_string())),
        ("sweep", sweep.err().map(|e| e.to_string())),
        ("dynamics", dynamics.err().map(|e| e.to_string())),
    ] {
        if let Some(e) = err {
            msg.push_str(&format!("\n  as {kind}: {e}"));
        }
    }
    Err(CliError::Config(msg))
}
