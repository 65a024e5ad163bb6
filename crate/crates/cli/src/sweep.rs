use std::path::Path;

use trustgrid::sim::sweep::{run_sweep, CellStats, SweepConfig, SweepSummary};

use crate::error::CliError;
use crate::output::{self, Format, OutDir};

pub const ROWS_HEADER: &str = "n_agents,malicious_count,strategy,seed,nominal,outcome,honest_evictions,\
malicious_evicted,identification_tick,attestations_at_identification,attestations,separated,error";
pub const CELLS_HEADER: &str = "n_agents,malicious_count,strategy,runs,completed,detection_rate,\
runs_with_honest_eviction,separation_rate,mean_attestations";

pub fn load(path: &Path, seed: Option<u64>) -> Result<SweepConfig, CliError> {
    let mut cfg = SweepConfig::from_json(&output::read_config(path)?)?;
    if let Some(seed) = seed {
        cfg.first_seed = seed;
    }
    Ok(cfg)
}

fn print_table(cells: &[CellStats]) {
    println!(
        "{:>5} {:>4} {:<16} {:>5} {:>9} {:>9} {:>10} {:>10} {:>12}",
        "N", "m", "strategy", "runs", "completed", "detected", "honest_ev", "separated", "attestations"
    );
    for c in cells {
        let attest = c.mean_attestations.map_or("-".to_string(), |a| format!("{a:.1}"));
        println!(
            "{:>5} {:>4} {:<16} {:>5} {:>9} {:>9.3} {:>10} {:>10.3} {:>12}",
            c.n_agents,
            c.malicious_count,
            format!("{:?}", c.strategy),
            c.runs,
            c.completed,
            c.detection_rate,
            c.runs_with_honest_eviction,
            c.separation_rate,
            attest
        );
    }
}

pub fn cmd_sweep(
    config: &Path,
    seed: Option<u64>,
    out: &Path,
    format: Format,
    jobs: usize,
) -> Result<SweepSummary, CliError> {
    let cfg = load(config, seed)?;
    let dir = OutDir::create(out)?;
    let summary = run_sweep(&cfg, jobs)?;
    match format {
        Format::Csv => {
            dir.csv("rows.csv", ROWS_HEADER, &summary.rows)?;
            dir.csv("cells.csv", CELLS_HEADER, &summary.cells)?;
        }
        Format::Json => dir.json("sweep.json", &summary)?,
    }
    print_table(&summary.cells);
    let failed = summary.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(CliError::Abort(format!(
            "{failed} of {} runs failed; see the error column",
            summary.rows.len()
        )));
    }
    Ok(summary)
}
