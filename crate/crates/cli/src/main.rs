use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use changeq::harness::{
    emit_outputs, oracle_check, reproduce_table, run_monte_carlo, DetectionTable, ExperimentConfig, MetricsTable,
    TableOptions, TableRow,
};

/// Q-learning with change detection on a nonstationary inventory model.
#[derive(Parser, Debug)]
#[command(name = "changeq", version, about)]
struct Cli {
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of Monte Carlo runs (overrides the config).
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the agent comparison described by a config file.
    Run {
        config: PathBuf,
        /// Also write the discounted post-change series.
        #[arg(long)]
        discounted_series: bool,
    },
    /// Detection delay, demand falling: full-stock map vs learned policy.
    Table1(TableArgs),
    /// Detection delay, demand rising: full-stock map vs learned policy.
    Table2(TableArgs),
    /// Compare value iteration with Q-learning on the pre-change model.
    OracleCheck {
        config: PathBuf,
        /// Value-iteration stopping tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Print the default config file.
    DefaultConfig {
        /// Start from the N = 7 scenario instead of N = 5.
        #[arg(long)]
        n7: bool,
    },
}

#[derive(Args, Debug)]
struct TableArgs {
    /// CUSUM drift multiples to test (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    eta: Vec<f64>,
    /// Demand rate pairs as `pre:post` (repeatable or comma separated).
    #[arg(long, value_delimiter = ',', value_parser = parse_rates)]
    rates: Vec<(f64, f64)>,
    /// Base config; defaults to the built-in N = 5 scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Change-free runs used to calibrate each threshold.
    #[arg(long, default_value_t = 10_000)]
    calibration_runs: usize,
    /// False-alarm rate the thresholds are calibrated to.
    #[arg(long, default_value_t = 0.01)]
    target_fa: f64,
}

fn parse_rates(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected pre:post, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("{x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}

impl Cli {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(n) = self.runs {
            cfg.n_runs = n;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.prec$}"))
}

fn print_metrics(t: &MetricsTable) {
    println!(
        "{} ({} runs, change at {}, horizon {})",
        t.scenario, t.n_runs, t.change_point, t.horizon
    );
    println!(
        "{:<8} {:>10} {:>10} {:>9} {:>9} {:>8} {:>7} {:>7}",
        "agent", "rwd_post", "rwd_total", "delay", "delay_lm", "detect%", "miss%", "fa%"
    );
    for m in &t.agents {
        println!(
            "{:<8} {:>10.1} {:>10.1} {:>9} {:>9} {:>8} {:>7} {:>7}",
            m.agent.name(),
            m.rwd_post,
            m.rwd_total,
            opt(m.avg_delay, 1),
            opt(m.avg_delay_last_moment, 1),
            opt(m.true_detect_pct, 2),
            opt(m.miss_pct, 2),
            opt(m.false_alarm_pct, 2)
        );
    }
}

fn print_table(rows: &[TableRow]) {
    println!(
        "{:>6} {:>6} {:>6} {:<11} {:>8} {:>9} {:>9} {:>7} {:>7}",
        "pre", "post", "eta", "policy", "thr_sd", "delay", "delay_lm", "fa", "miss"
    );
    for r in rows {
        println!(
            "{:>6} {:>6} {:>6} {:<11} {:>8.3} {:>9} {:>9} {:>7.4} {:>7.4}",
            r.rate_pre,
            r.rate_post,
            r.eta,
            r.policy.name(),
            r.threshold_sd,
            opt(r.avg_delay, 1),
            opt(r.avg_delay_last_moment, 1),
            r.false_alarm,
            r.miss
        );
    }
}

fn write_table(dir: &Path, name: &str, rows: &[TableRow]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{name}.csv"));
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path)
}

fn table(cli: &Cli, which: DetectionTable, name: &str, args: &TableArgs) -> Result<()> {
    let mut base = match &args.config {
        Some(p) => load(p)?,
        None => ExperimentConfig::default(),
    };
    cli.apply(&mut base);
    let cases = which.select(&args.rates, &args.eta)?;
    if cases.is_empty() {
        bail!("no table cases selected");
    }
    let opts = TableOptions {
        runs: base.n_runs,
        calibration_runs: args.calibration_runs,
        target_fa: args.target_fa,
    };
    let rows = reproduce_table(&base, &cases, &opts)?;
    print_table(&rows);
    let path = write_table(&base.out_dir, name, &rows)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run {
            config,
            discounted_series,
        } => {
            let mut cfg = load(config)?;
            cli.apply(&mut cfg);
            cfg.discounted_series |= *discounted_series;
            cfg.validate()?;
            let out = run_monte_carlo(&cfg)?;
            print_metrics(&out.table);
            let paths = emit_outputs(&out, &cfg, &cfg.out_dir)?;
            eprintln!("wrote {}", paths.summary.display());
            for p in paths.series.iter().chain(paths.runs.iter()) {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Table1(args) => table(&cli, DetectionTable::HighToLow, "table1", args)?,
        Command::Table2(args) => table(&cli, DetectionTable::LowToHigh, "table2", args)?,
        Command::OracleCheck { config, tol } => {
            let mut cfg = load(config)?;
            cfg.n_runs = 100;
            cli.apply(&mut cfg);
            let chk = oracle_check(&cfg, cfg.n_runs, *tol, None)?;
            println!("value iteration: {} sweeps, policy {:?}", chk.iterations, chk.vi_policy);
            println!(
                "bellman residual {:.3e} (bound {:.3e}): {}",
                chk.residual,
                chk.residual_bound,
                if chk.residual_ok() { "ok" } else { "VIOLATED" }
            );
            println!("optimal actions per state: {:?}", chk.optimal_actions);
            println!(
                "q-learning ({} steps): {}/{} runs match exactly, {}/{} choose optimal actions everywhere",
                chk.steps, chk.exact_matches, chk.runs, chk.optimal_matches, chk.runs
            );
            std::fs::create_dir_all(&cfg.out_dir)?;
            let path = cfg.out_dir.join("oracle_check.json");
            std::fs::write(&path, serde_json::to_string_pretty(&chk)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        Command::DefaultConfig { n7 } => {
            let cfg = if *n7 {
                ExperimentConfig::inventory_n7()
            } else {
                ExperimentConfig::default()
            };
            print!("{}", cfg.to_toml_string());
        }
    }
    Ok(())
}
