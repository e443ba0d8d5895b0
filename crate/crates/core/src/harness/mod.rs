//! Experiment configuration, Monte Carlo execution and output files.

mod config;
mod monte_carlo;
mod oracle;
mod output;
mod tables;

pub use config::{DirectionChoice, ExperimentConfig, InitChoice};
pub use monte_carlo::{run_monte_carlo, AgentMetrics, ExperimentOutput, MetricsTable, RunRow};
pub use oracle::{oracle_check, OracleCheck};
pub use output::{emit_outputs, OutputPaths, SUMMARY_SCHEMA_VERSION};
pub use tables::{
    calibrate_threshold, reproduce_table, run_detection, DetectionOutcome, DetectionPolicy, DetectionTable, TableCase,
    TableOptions, TableRow,
};

use crate::error::{Error, Result};

/// Builds a rayon pool with `jobs` workers (0 = rayon default).
pub(crate) fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Run indices are processed in fixed-size chunks whose partial results are
/// combined in index order, so floating-point reductions do not depend on
/// the number of workers.
pub(crate) const CHUNK: usize = 128;
