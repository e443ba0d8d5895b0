use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pool, ExperimentConfig, CHUNK};
use crate::agents::{run_agent, AgentKind, Classification, RunResult};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// One row of the run-level CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub agent: AgentKind,
    pub run: usize,
    pub seed: u64,
    pub stream: u64,
    pub detection: Option<usize>,
    pub classification: Classification,
    pub delay: Option<usize>,
    pub total: f64,
    pub post_change: f64,
    pub suspect_steps: usize,
    pub mu0: Option<f64>,
    pub sd0: Option<f64>,
    pub alarm_abs: Option<f64>,
    pub suspect_abs: Option<f64>,
}

impl RunRow {
    fn new(run: usize, seed: u64, res: &RunResult) -> Self {
        let resolved = res.resolved.as_ref();
        Self {
            agent: res.agent,
            run,
            seed,
            stream: run as u64,
            detection: res.detection,
            classification: res.classification,
            delay: res.delay(),
            total: res.total,
            post_change: res.post_change,
            suspect_steps: res.suspect_steps(),
            mu0: resolved.map(|r| r.baseline.mu0),
            sd0: resolved.map(|r| r.baseline.sd0),
            alarm_abs: resolved.map(|r| r.alarm_abs),
            suspect_abs: resolved.and_then(|r| r.suspect_abs),
        }
    }
}

/// Aggregate metrics of one agent. Reward and delay means exclude false-alarm
/// runs; percentages are over all runs and only exist for agents that run
/// a detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMetrics {
    pub agent: AgentKind,
    pub runs: usize,
    /// Runs entering the reward means (all but false alarms).
    pub counted_runs: usize,
    pub rwd_post: f64,
    pub rwd_post_se: f64,
    pub rwd_total: f64,
    pub rwd_total_se: f64,
    /// Mean delay over true detections.
    pub avg_delay: Option<f64>,
    /// Mean delay with each miss counted as a detection at the last step.
    pub avg_delay_last_moment: Option<f64>,
    pub true_detect_pct: Option<f64>,
    pub miss_pct: Option<f64>,
    pub false_alarm_pct: Option<f64>,
    pub mean_suspect_steps: f64,
    pub mean_mu0: Option<f64>,
    pub mean_sd0: Option<f64>,
    pub mean_alarm_abs: Option<f64>,
    pub mean_suspect_abs: Option<f64>,
    /// Mean cumulative undiscounted post-change reward, one entry per step
    /// from the change point to the horizon.
    #[serde(skip)]
    pub series: Vec<f64>,
    /// Same, discounted from the change point; only when requested.
    #[serde(skip)]
    pub discounted_series: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub scenario: String,
    pub n_runs: usize,
    pub change_point: usize,
    pub horizon: usize,
    pub agents: Vec<AgentMetrics>,
}

impl MetricsTable {
    pub fn get(&self, agent: AgentKind) -> Option<&AgentMetrics> {
        self.agents.iter().find(|m| m.agent == agent)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: MetricsTable,
    /// Run-level rows, agent-major in the order of `cfg.agents`.
    pub runs: Vec<RunRow>,
}

struct ChunkResult {
    rows: Vec<Vec<RunRow>>,
    sums: Vec<Vec<f64>>,
    disc_sums: Vec<Vec<f64>>,
}

fn accumulate_post(sum: &mut [f64], rewards: &[f64], change_point: usize, beta: Option<f64>) {
    let mut acc = 0.0;
    let mut w = 1.0;
    for (slot, r) in sum.iter_mut().zip(&rewards[change_point..]) {
        match beta {
            Some(b) => {
                acc += w * r;
                w *= b;
            }
            None => acc += r,
        }
        *slot += acc;
    }
}

fn run_chunk(
    cfg: &ExperimentConfig,
    env: &crate::mdp::NonstationaryProcess,
    range: std::ops::Range<usize>,
) -> Result<ChunkResult> {
    let agent_cfg = cfg.agent_config()?;
    let len = cfg.horizon - cfg.change_point;
    let k = cfg.agents.len();
    let mut out = ChunkResult {
        rows: vec![Vec::with_capacity(range.len()); k],
        sums: vec![vec![0.0; len]; k],
        disc_sums: vec![
            if cfg.discounted_series {
                vec![0.0; len]
            } else {
                Vec::new()
            };
            k
        ],
    };
    for run in range {
        for (j, &kind) in cfg.agents.iter().enumerate() {
            // Every agent sees the same stream for a given run index.
            let mut rng = RngStream::for_run(cfg.seed, run as u64);
            let res = run_agent(kind, &agent_cfg, env, env.change_point, &mut rng)
                .map_err(|e| Error::State(format!("run {run}, agent {kind}: {e}")))?;
            if res.classification != Classification::FalseAlarm {
                accumulate_post(&mut out.sums[j], &res.rewards, env.change_point, None);
                if cfg.discounted_series {
                    accumulate_post(&mut out.disc_sums[j], &res.rewards, env.change_point, Some(cfg.beta));
                }
            }
            out.rows[j].push(RunRow::new(run, cfg.seed, &res));
        }
    }
    Ok(out)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn mean_of(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

fn aggregate(
    kind: AgentKind,
    rows: &[RunRow],
    series_sum: Vec<f64>,
    disc_sum: Option<Vec<f64>>,
    horizon: usize,
    change_point: usize,
) -> AgentMetrics {
    let runs = rows.len();
    let counted: Vec<&RunRow> = rows
        .iter()
        .filter(|r| r.classification != Classification::FalseAlarm)
        .collect();
    let (rwd_post, rwd_post_se) = mean_se(&counted.iter().map(|r| r.post_change).collect::<Vec<_>>());
    let (rwd_total, rwd_total_se) = mean_se(&counted.iter().map(|r| r.total).collect::<Vec<_>>());
    let pct = |c: Classification| 100.0 * rows.iter().filter(|r| r.classification == c).count() as f64 / runs as f64;
    let last = (horizon - 1 - change_point) as f64;

    let (avg_delay, avg_delay_last_moment, td, miss, fa) = match kind {
        AgentKind::Oracle => (Some(0.0), Some(0.0), None, None, None),
        AgentKind::Ignore => (None, None, None, None, None),
        _ => (
            mean_of(rows.iter().filter_map(|r| r.delay.map(|d| d as f64))),
            mean_of(rows.iter().filter_map(|r| match r.classification {
                Classification::TrueDetect => r.delay.map(|d| d as f64),
                Classification::Miss => Some(last),
                Classification::FalseAlarm => None,
            })),
            Some(pct(Classification::TrueDetect)),
            Some(pct(Classification::Miss)),
            Some(pct(Classification::FalseAlarm)),
        ),
    };

    let n = counted.len().max(1) as f64;
    AgentMetrics {
        agent: kind,
        runs,
        counted_runs: counted.len(),
        rwd_post,
        rwd_post_se,
        rwd_total,
        rwd_total_se,
        avg_delay,
        avg_delay_last_moment,
        true_detect_pct: td,
        miss_pct: miss,
        false_alarm_pct: fa,
        mean_suspect_steps: rows.iter().map(|r| r.suspect_steps as f64).sum::<f64>() / runs as f64,
        mean_mu0: mean_of(rows.iter().filter_map(|r| r.mu0)),
        mean_sd0: mean_of(rows.iter().filter_map(|r| r.sd0)),
        mean_alarm_abs: mean_of(rows.iter().filter_map(|r| r.alarm_abs)),
        mean_suspect_abs: mean_of(rows.iter().filter_map(|r| r.suspect_abs)),
        series: series_sum.into_iter().map(|x| x / n).collect(),
        discounted_series: disc_sum.map(|v| v.into_iter().map(|x| x / n).collect()),
    }
}

/// Runs `cfg.n_runs` independent runs of every selected agent and aggregates
/// them. The result depends only on the configuration (including the seed),
/// not on the number of workers.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let env = cfg.process()?;
    let n = cfg.n_runs;
    let chunks: Vec<std::ops::Range<usize>> = (0..n).step_by(CHUNK).map(|lo| lo..(lo + CHUNK).min(n)).collect();
    let results: Vec<ChunkResult> = pool(cfg.jobs)?.install(|| {
        chunks
            .into_par_iter()
            .map(|r| run_chunk(cfg, &env, r))
            .collect::<Result<_>>()
    })?;

    let k = cfg.agents.len();
    let len = cfg.horizon - cfg.change_point;
    let mut rows: Vec<Vec<RunRow>> = vec![Vec::with_capacity(n); k];
    let mut sums = vec![vec![0.0; len]; k];
    let mut disc = vec![vec![0.0; len]; k];
    for chunk in results {
        for j in 0..k {
            rows[j].extend_from_slice(&chunk.rows[j]);
            for (a, b) in sums[j].iter_mut().zip(&chunk.sums[j]) {
                *a += b;
            }
            for (a, b) in disc[j].iter_mut().zip(&chunk.disc_sums[j]) {
                *a += b;
            }
        }
    }

    let agents = cfg
        .agents
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let d = cfg.discounted_series.then(|| std::mem::take(&mut disc[j]));
            aggregate(
                kind,
                &rows[j],
                std::mem::take(&mut sums[j]),
                d,
                cfg.horizon,
                cfg.change_point,
            )
        })
        .collect();
    Ok(ExperimentOutput {
        table: MetricsTable {
            scenario: cfg.scenario.clone(),
            n_runs: n,
            change_point: cfg.change_point,
            horizon: cfg.horizon,
            agents,
        },
        runs: rows.into_iter().flatten().collect(),
    })
}
