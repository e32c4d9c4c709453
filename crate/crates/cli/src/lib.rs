//! Batch front end for fairness-aware active-learning experiments: cohort
//! generation, baseline models, grid runs and curve reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod results;

pub use commands::{cmd_baseline, cmd_generate, cmd_run, RunManifest, RunOptions};
pub use config::{Composition, Config};
pub use error::{CliError, CliResult};
pub use report::build_report;
pub use results::{read_rows_from, ResultRow};

/// Builds a report from a results CSV and writes its files to `out`.
pub fn cmd_report(results: &std::path::Path, out: &std::path::Path) -> CliResult<report::Report> {
    let rows = read_rows_from(results)?;
    if rows.is_empty() {
        return Err(CliError::NoData(results.display().to_string()));
    }
    let rep = build_report(&rows)?;
    rep.write(out)?;
    Ok(rep)
}
