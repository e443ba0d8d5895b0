//! Summary JSON, figure series CSV and run-level CSV.
//!
//! `series.csv` columns: `step` (steps since the change point, starting at 0)
//! then one column per agent with the mean cumulative undiscounted
//! post-change reward; with `discounted_series` set, one `<agent>_discounted`
//! column per agent follows.
//!
//! `runs.csv` columns: `agent, run, seed, stream, detection, classification,
//! delay, total, post_change, suspect_steps, mu0, sd0, alarm_abs,
//! suspect_abs`; empty cells mean "not applicable".

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{AgentMetrics, ExperimentConfig, ExperimentOutput};
use crate::error::{Error, Result};

/// Bumped whenever a field of the summary changes meaning or disappears.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub summary: PathBuf,
    pub series: Option<PathBuf>,
    pub runs: Option<PathBuf>,
}

#[derive(Serialize)]
struct ResolvedThresholds {
    /// Thresholds in sd0 units as configured.
    single_sd: f64,
    suspect_sd: f64,
    confirm_sd: f64,
    /// Run means of the absolute thresholds.
    mean_alarm_abs: Option<f64>,
    mean_suspect_abs: Option<f64>,
    mean_mu0: Option<f64>,
    mean_sd0: Option<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema_version: u32,
    scenario: &'a str,
    n_runs: usize,
    change_point: usize,
    horizon: usize,
    agents: BTreeMap<&'a str, &'a AgentMetrics>,
    thresholds: BTreeMap<&'a str, ResolvedThresholds>,
    config: &'a ExperimentConfig,
}

fn create(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `summary.json`, `series.csv` and `runs.csv` into `dir` (created if
/// missing). With no agents only the summary is written.
pub fn emit_outputs(out: &ExperimentOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table = &out.table;

    let summary_path = dir.join("summary.json");
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        scenario: &table.scenario,
        n_runs: table.n_runs,
        change_point: table.change_point,
        horizon: table.horizon,
        agents: table.agents.iter().map(|m| (m.agent.name(), m)).collect(),
        thresholds: table
            .agents
            .iter()
            .filter(|m| m.agent.has_detector())
            .map(|m| {
                (
                    m.agent.name(),
                    ResolvedThresholds {
                        single_sd: cfg.threshold_a,
                        suspect_sd: cfg.threshold_b,
                        confirm_sd: cfg.threshold_a_tilde,
                        mean_alarm_abs: m.mean_alarm_abs,
                        mean_suspect_abs: m.mean_suspect_abs,
                        mean_mu0: m.mean_mu0,
                        mean_sd0: m.mean_sd0,
                    },
                )
            })
            .collect(),
        config: cfg,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    std::fs::write(&summary_path, text).map_err(|e| Error::io(&summary_path, e))?;

    if table.agents.is_empty() {
        return Ok(OutputPaths {
            summary: summary_path,
            series: None,
            runs: None,
        });
    }

    let series_path = dir.join("series.csv");
    {
        let mut w = csv::Writer::from_writer(create(&series_path)?);
        let mut header = vec!["step".to_string()];
        header.extend(table.agents.iter().map(|m| m.agent.name().to_string()));
        let discounted = table.agents.iter().all(|m| m.discounted_series.is_some());
        if discounted {
            header.extend(table.agents.iter().map(|m| format!("{}_discounted", m.agent.name())));
        }
        w.write_record(&header).map_err(csv_err(&series_path))?;
        let len = table.agents[0].series.len();
        for k in 0..len {
            let mut rec = vec![k.to_string()];
            rec.extend(table.agents.iter().map(|m| m.series[k].to_string()));
            if discounted {
                rec.extend(
                    table
                        .agents
                        .iter()
                        .map(|m| m.discounted_series.as_ref().expect("checked")[k].to_string()),
                );
            }
            w.write_record(&rec).map_err(csv_err(&series_path))?;
        }
        w.flush().map_err(|e| Error::io(&series_path, e))?;
    }

    let runs_path = dir.join("runs.csv");
    {
        let mut w = csv::Writer::from_writer(create(&runs_path)?);
        for row in &out.runs {
            w.serialize(row).map_err(csv_err(&runs_path))?;
        }
        w.flush().map_err(|e| Error::io(&runs_path, e))?;
    }

    Ok(OutputPaths {
        summary: summary_path,
        series: Some(series_path),
        runs: Some(runs_path),
    })
}
