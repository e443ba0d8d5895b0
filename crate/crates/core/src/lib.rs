//! Reinforcement learning under a single abrupt model change.
//!
//! The crate provides finite MDPs with a change point, decaying
//! epsilon-greedy Q-learning, CUSUM change detectors, the single- and
//! two-threshold adaptive Q-learning agents, an inventory-control testbed and
//! a Monte Carlo harness that aggregates and writes experiment tables.

pub mod agents;
pub mod detect;
pub mod error;
pub mod harness;
pub mod inventory;
pub mod mdp;
pub mod qlearn;
pub mod rng;

pub use agents::{AgentConfig, AgentKind, Classification, Phase, RunResult, Thresholds};
pub use detect::{Baseline, CusumDetector, Direction, GlrCusum};
pub use error::{Error, Result};
pub use harness::{run_monte_carlo, ExperimentConfig, MetricsTable};
pub use inventory::{DemandModel, InventoryParams, PurchaseCost};
pub use mdp::{Environment, NonstationaryProcess, StepRecord, TabularMdp};
pub use qlearn::{InitKind, InitStrategy, LearningSchedule, QLearner, QTable};
pub use rng::RngStream;
