//! Experiment orchestration: configuration, seeded runs, aggregation across
//! seeds, and CSV/JSON output.

mod config;
mod output;
mod run;

pub use config::{
    EnvSpec, EstimatorSpec, ExperimentConfig, MarginConvention, MarginSpec, RunSpec, StrategySpec,
};
pub use output::{
    csv_header, emit_csv, emit_summary_json, fmt6, format_table, parse_csv, read_summary_json,
    write_csv, SummaryFile,
};
pub use run::{
    run_batch, run_series, run_single, AggregateSeries, BatchResult, Experiment, RunOutput,
    RunSummary, Stat, SummaryRow,
};

use std::path::Path;

use crate::error::{CbwkError, Result};

/// Runs a batch and writes `series.csv`, `summary.json` and `config.toml`
/// into `out`.
pub fn run_to_dir(cfg: ExperimentConfig, out: &Path) -> Result<BatchResult> {
    std::fs::create_dir_all(out).map_err(|source| CbwkError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let cfg_text = cfg.to_toml_string()?;
    let exp = Experiment::new(cfg)?;
    let batch = run_batch(&exp)?;
    emit_csv(&batch.series, &out.join("series.csv"))?;
    emit_summary_json(std::slice::from_ref(&batch.summary), &batch.runs, &out.join("summary.json"))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg_text).map_err(|source| CbwkError::Io { path: cfg_path, source })?;
    Ok(batch)
}
