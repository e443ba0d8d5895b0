//! Shared fixtures for the benchmarks.

use changeq::harness::ExperimentConfig;
use changeq::{AgentConfig, NonstationaryProcess};

/// The default N = 5 scenario: process and agent settings.
pub fn n5() -> (NonstationaryProcess, AgentConfig) {
    let cfg = ExperimentConfig::default();
    (
        cfg.process().expect("default process"),
        cfg.agent_config().expect("default agents"),
    )
}

/// A short Monte Carlo configuration for end-to-end timing.
pub fn small_experiment(n_runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_runs,
        jobs: 1,
        ..ExperimentConfig::default()
    }
}
