//! Detection-delay comparison between the full-stock map and a learned
//! policy, at thresholds calibrated to a common false-alarm rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pool, ExperimentConfig};
use crate::agents::Classification;
use crate::detect::{baseline_stats, CusumDetector};
use crate::error::{Error, Result};
use crate::inventory::full_stock_map;
use crate::mdp::{Environment, NonstationaryProcess};
use crate::qlearn::{init_qtable, QLearner};
use crate::rng::RngStream;

/// Calibration runs use streams far away from evaluation streams.
const CALIBRATION_STREAM_BASE: u64 = 1 << 40;

/// How the agent acts once the baseline window has closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionPolicy {
    /// Keep the warehouse full: `a = N - s`.
    FullStock,
    /// Keep running epsilon-greedy Q-learning.
    Learned,
}

impl DetectionPolicy {
    pub fn name(self) -> &'static str {
        match self {
            DetectionPolicy::FullStock => "full_stock",
            DetectionPolicy::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOutcome {
    pub detection: Option<usize>,
    pub classification: Classification,
    /// Largest `|W| / sd0` seen in `[delta, change_point)`.
    pub max_pre_change: f64,
    pub sd0: f64,
}

fn ratio(w: f64, sd0: f64) -> f64 {
    if sd0 > 0.0 {
        w.abs() / sd0
    } else if w == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// One detection run: Q-learning until the baseline window closes, then act
/// with `policy` while the reward CUSUM runs; stops at the first alarm above
/// `threshold_sd * sd0`. With an infinite threshold the run ends at the
/// change point (calibration).
pub fn run_detection(
    cfg: &ExperimentConfig,
    env: &NonstationaryProcess,
    policy: DetectionPolicy,
    threshold_sd: f64,
    rng: &mut RngStream,
) -> Result<DetectionOutcome> {
    let agent = cfg.agent_config()?;
    let (ns, na) = (env.n_states(), env.n_actions());
    agent.validate(ns, na)?;
    let mut learner = QLearner::new(init_qtable(&agent.pre_init, ns, na, rng)?, agent.schedule);
    let full = full_stock_map(cfg.capacity);
    let mut detector = CusumDetector::new(agent.direction, agent.eta);
    let mut rewards = Vec::with_capacity(agent.delta);
    let mut max_pre = 0.0f64;
    let mut sd0 = f64::NAN;
    let mut s = agent.start_state;
    let end = if threshold_sd.is_finite() {
        agent.horizon
    } else {
        env.change_point.min(agent.horizon)
    };

    for t in 0..end {
        let frozen_policy = t >= agent.delta && policy == DetectionPolicy::FullStock;
        let a = if frozen_policy { full[s] } else { learner.act(s, rng) };
        let (s2, r) = env.step(t, s, a, rng)?;
        if !frozen_policy {
            learner.learn(s, a, r, s2);
        }
        s = s2;
        if t < agent.delta {
            rewards.push(r);
            if t + 1 == agent.delta {
                let b = baseline_stats(&rewards, agent.tau, agent.delta)?;
                sd0 = b.sd0;
                detector.arm(b);
            }
            continue;
        }
        let x = ratio(detector.update(r)?, sd0);
        if t < env.change_point {
            max_pre = max_pre.max(x);
        }
        if x > threshold_sd {
            return Ok(DetectionOutcome {
                detection: Some(t),
                classification: Classification::of(Some(t), env.change_point),
                max_pre_change: max_pre,
                sd0,
            });
        }
    }
    Ok(DetectionOutcome {
        detection: None,
        classification: Classification::Miss,
        max_pre_change: max_pre,
        sd0,
    })
}

/// Threshold (in sd0 units) whose empirical false-alarm rate over
/// `[delta, change_point)` is at most `target_fa`, estimated from `runs`
/// change-free runs.
pub fn calibrate_threshold(
    cfg: &ExperimentConfig,
    policy: DetectionPolicy,
    target_fa: f64,
    runs: usize,
) -> Result<f64> {
    if !(0.0..1.0).contains(&target_fa) || runs == 0 {
        return Err(Error::Argument(format!(
            "cannot calibrate to {target_fa} with {runs} runs"
        )));
    }
    let base = cfg.process()?;
    let env = NonstationaryProcess::new(base.pre.clone(), base.pre, cfg.change_point)?;
    let mut maxima: Vec<f64> = pool(cfg.jobs)?.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::for_run(cfg.seed, CALIBRATION_STREAM_BASE + i as u64);
                run_detection(cfg, &env, policy, f64::INFINITY, &mut rng).map(|o| o.max_pre_change)
            })
            .collect::<Result<_>>()
    })?;
    maxima.sort_by(f64::total_cmp);
    let k = ((runs as f64) * (1.0 - target_fa)).ceil() as usize;
    Ok(maxima[k.clamp(1, runs) - 1])
}

/// Which demand shift a table covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionTable {
    HighToLow,
    LowToHigh,
}

/// One `(rate_pre, rate_post, eta)` case of a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableCase {
    pub rate_pre: f64,
    pub rate_post: f64,
    pub eta: f64,
}

impl DetectionTable {
    pub fn cases(self) -> Vec<TableCase> {
        let rows: &[(f64, f64, f64)] = match self {
            DetectionTable::HighToLow => &[
                (4.0, 1.8, 0.92),
                (4.0, 1.8, 0.7),
                (3.0, 1.0, 0.9),
                (3.0, 1.0, 0.7),
                (3.5, 2.5, 0.2),
                (3.5, 2.5, 0.1),
            ],
            DetectionTable::LowToHigh => &[
                (2.0, 4.0, 0.3),
                (2.0, 4.0, 0.1),
                (1.5, 3.5, 0.4),
                (1.5, 3.5, 0.3),
                (2.0, 3.0, 0.2),
                (2.0, 3.0, 0.05),
            ],
        };
        rows.iter()
            .map(|&(rate_pre, rate_post, eta)| TableCase {
                rate_pre,
                rate_post,
                eta,
            })
            .collect()
    }

    /// The default cases, narrowed by optional rate-pair and eta overrides.
    /// A rate pair without default cases needs explicit etas.
    pub fn select(self, rates: &[(f64, f64)], etas: &[f64]) -> Result<Vec<TableCase>> {
        let defaults = self.cases();
        let mut pairs: Vec<(f64, f64)> = rates.to_vec();
        if pairs.is_empty() {
            for c in &defaults {
                if !pairs.contains(&(c.rate_pre, c.rate_post)) {
                    pairs.push((c.rate_pre, c.rate_post));
                }
            }
        }
        let mut out = Vec::new();
        for (l0, l1) in pairs {
            if etas.is_empty() {
                let found: Vec<_> = defaults
                    .iter()
                    .filter(|c| c.rate_pre == l0 && c.rate_post == l1)
                    .copied()
                    .collect();
                if found.is_empty() {
                    return Err(Error::Argument(format!(
                        "no default eta for rates {l0} -> {l1}; pass one explicitly"
                    )));
                }
                out.extend(found);
            } else {
                out.extend(etas.iter().map(|&eta| TableCase {
                    rate_pre: l0,
                    rate_post: l1,
                    eta,
                }));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableOptions {
    /// Evaluation runs per (case, policy).
    pub runs: usize,
    /// Change-free runs used to calibrate each threshold.
    pub calibration_runs: usize,
    pub target_fa: f64,
}

impl Default for TableOptions {
    fn default() -> Self {
        Self {
            runs: 10_000,
            calibration_runs: 10_000,
            target_fa: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rate_pre: f64,
    pub rate_post: f64,
    pub eta: f64,
    pub policy: DetectionPolicy,
    pub threshold_sd: f64,
    pub runs: usize,
    /// Mean delay over true detections; undefined without a change.
    pub avg_delay: Option<f64>,
    /// Mean delay with misses counted at the last step.
    pub avg_delay_last_moment: Option<f64>,
    /// Fraction of runs alarming before the change point.
    pub false_alarm: f64,
    pub miss: f64,
}

/// Runs every case under both policies. `base` supplies everything except
/// the rates and `eta` (capacity, horizon, windows, schedule, init rules,
/// seed, workers).
pub fn reproduce_table(base: &ExperimentConfig, cases: &[TableCase], opts: &TableOptions) -> Result<Vec<TableRow>> {
    if opts.runs == 0 {
        return Err(Error::Argument("table needs at least one run".into()));
    }
    let mut rows = Vec::new();
    for case in cases {
        let cfg = ExperimentConfig {
            rate_pre: case.rate_pre,
            rate_post: case.rate_post,
            eta: case.eta,
            ..base.clone()
        };
        cfg.validate()?;
        let env = cfg.process()?;
        for policy in [DetectionPolicy::FullStock, DetectionPolicy::Learned] {
            let thr = calibrate_threshold(&cfg, policy, opts.target_fa, opts.calibration_runs)?;
            let outcomes: Vec<DetectionOutcome> = pool(cfg.jobs)?.install(|| {
                (0..opts.runs)
                    .into_par_iter()
                    .map(|i| run_detection(&cfg, &env, policy, thr, &mut RngStream::for_run(cfg.seed, i as u64)))
                    .collect::<Result<_>>()
            })?;
            rows.push(summarise(&cfg, case, policy, thr, &outcomes));
        }
    }
    Ok(rows)
}

fn summarise(
    cfg: &ExperimentConfig,
    case: &TableCase,
    policy: DetectionPolicy,
    thr: f64,
    outcomes: &[DetectionOutcome],
) -> TableRow {
    let n = outcomes.len() as f64;
    let count = |c| outcomes.iter().filter(|o| o.classification == c).count() as f64;
    let changed = case.rate_pre != case.rate_post;
    let last = (cfg.horizon - 1 - cfg.change_point) as f64;
    let mean = |xs: Vec<f64>| (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64);
    let delays = |with_misses: bool| {
        outcomes
            .iter()
            .filter_map(|o| match (o.classification, o.detection) {
                (Classification::TrueDetect, Some(d)) => Some((d - cfg.change_point) as f64),
                (Classification::Miss, _) if with_misses => Some(last),
                _ => None,
            })
            .collect::<Vec<_>>()
    };
    TableRow {
        rate_pre: case.rate_pre,
        rate_post: case.rate_post,
        eta: case.eta,
        policy,
        threshold_sd: thr,
        runs: outcomes.len(),
        avg_delay: if changed { mean(delays(false)) } else { None },
        avg_delay_last_moment: if changed { mean(delays(true)) } else { None },
        false_alarm: count(Classification::FalseAlarm) / n,
        miss: if changed { count(Classification::Miss) / n } else { 0.0 },
    }
}
