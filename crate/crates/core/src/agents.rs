//! End-to-end agents for a process with one abrupt model change.
//!
//! All four agents share one step loop and differ only in when (and whether)
//! the Q-table is re-initialised:
//!
//! * **STAQL** learns throughout and re-initialises when the reward CUSUM
//!   crosses a single threshold `A`.
//! * **TTAQL** adds a suspect band `B < |W| <= A~`: inside it the agent acts
//!   with a fixed detection-friendly map and freezes learning; above `A~` it
//!   declares the change and re-initialises.
//! * **Oracle** re-initialises at the true change point.
//! * **Ignore** never re-initialises.

use serde::{Deserialize, Serialize};

use crate::detect::{baseline_stats, Baseline, CusumDetector, Direction};
use crate::error::{Error, Result};
use crate::mdp::{discounted_return, Environment};
use crate::qlearn::{init_qtable, InitStrategy, LearningSchedule, QLearner, QTable};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Ttaql,
    Staql,
    Ignore,
    Oracle,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Ttaql, AgentKind::Staql, AgentKind::Ignore, AgentKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Ttaql => "ttaql",
            AgentKind::Staql => "staql",
            AgentKind::Ignore => "ignore",
            AgentKind::Oracle => "oracle",
        }
    }

    /// Whether the agent runs a change detector of its own.
    pub fn has_detector(self) -> bool {
        matches!(self, AgentKind::Ttaql | AgentKind::Staql)
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ttaql" => Ok(AgentKind::Ttaql),
            "staql" => Ok(AgentKind::Staql),
            "ignore" => Ok(AgentKind::Ignore),
            "oracle" => Ok(AgentKind::Oracle),
            other => Err(Error::Config(format!("unknown agent '{other}'"))),
        }
    }
}

/// Detector thresholds in multiples of the baseline deviation `sd0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// STAQL alarm threshold `A`.
    pub single: f64,
    /// TTAQL suspect threshold `B`.
    pub suspect: f64,
    /// TTAQL confirmation threshold `A~`.
    pub confirm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub horizon: usize,
    /// Start of the baseline window.
    pub tau: usize,
    /// End (exclusive) of the baseline window; detection starts here.
    pub delta: usize,
    pub start_state: usize,
    pub schedule: LearningSchedule,
    pub pre_init: InitStrategy,
    pub post_init: InitStrategy,
    pub direction: Direction,
    pub eta: f64,
    pub thresholds: Thresholds,
    /// Acting map while TTAQL is in its suspect band.
    pub qcd_policy: Vec<usize>,
}

impl AgentConfig {
    pub fn validate(&self, n_states: usize, n_actions: usize) -> Result<()> {
        if !(self.tau < self.delta && self.delta < self.horizon) {
            return Err(Error::Config(format!(
                "need tau < delta < horizon, got {} / {} / {}",
                self.tau, self.delta, self.horizon
            )));
        }
        if self.delta - self.tau < 2 {
            return Err(Error::Config("baseline window must hold at least two rewards".into()));
        }
        if self.start_state >= n_states {
            return Err(Error::Config(format!("start state {} out of range", self.start_state)));
        }
        if self.qcd_policy.len() != n_states || self.qcd_policy.iter().any(|a| *a >= n_actions) {
            return Err(Error::Config("QCD policy does not fit the state/action spaces".into()));
        }
        let t = &self.thresholds;
        if [t.single, t.suspect, t.confirm, self.eta]
            .iter()
            .any(|x| !x.is_finite() || *x < 0.0)
        {
            return Err(Error::Config(
                "thresholds and eta must be finite and nonnegative".into(),
            ));
        }
        self.schedule.validate()
    }

    fn validate_two_threshold(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.suspect > t.confirm {
            return Err(Error::Config(format!(
                "suspect threshold B = {} must not exceed confirmation threshold {}",
                t.suspect, t.confirm
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    TrueDetect,
    FalseAlarm,
    Miss,
}

impl Classification {
    pub fn of(detection: Option<usize>, change_point: usize) -> Self {
        match detection {
            None => Classification::Miss,
            Some(d) if d < change_point => Classification::FalseAlarm,
            Some(_) => Classification::TrueDetect,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Classification::TrueDetect => "true_detect",
            Classification::FalseAlarm => "false_alarm",
            Classification::Miss => "miss",
        }
    }
}

/// What the agent was doing at a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Learning the first model (epsilon-greedy on the current table).
    Learning,
    /// TTAQL suspect band: fixed QCD map, table frozen.
    Suspect,
    /// Learning again after re-initialisation.
    Relearning,
}

/// Absolute detector settings resolved at the end of the baseline window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub baseline: Baseline,
    pub alarm_abs: f64,
    pub suspect_abs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub agent: AgentKind,
    pub rewards: Vec<f64>,
    pub phases: Vec<Phase>,
    pub detection: Option<usize>,
    pub classification: Classification,
    pub change_point: usize,
    pub total: f64,
    pub post_change: f64,
    pub resolved: Option<Resolved>,
}

impl RunResult {
    /// `detection - change_point` for true detections.
    pub fn delay(&self) -> Option<usize> {
        match (self.classification, self.detection) {
            (Classification::TrueDetect, Some(d)) => Some(d - self.change_point),
            _ => None,
        }
    }

    /// Number of steps spent in the TTAQL suspect band.
    pub fn suspect_steps(&self) -> usize {
        self.phases.iter().filter(|p| **p == Phase::Suspect).count()
    }
}

pub fn run_staql<E: Environment + ?Sized>(
    cfg: &AgentConfig,
    env: &E,
    change_point: usize,
    rng: &mut RngStream,
) -> Result<RunResult> {
    run_agent(AgentKind::Staql, cfg, env, change_point, rng)
}

pub fn run_ttaql<E: Environment + ?Sized>(
    cfg: &AgentConfig,
    env: &E,
    change_point: usize,
    rng: &mut RngStream,
) -> Result<RunResult> {
    run_agent(AgentKind::Ttaql, cfg, env, change_point, rng)
}

pub fn run_oracle<E: Environment + ?Sized>(
    cfg: &AgentConfig,
    env: &E,
    change_point: usize,
    rng: &mut RngStream,
) -> Result<RunResult> {
    run_agent(AgentKind::Oracle, cfg, env, change_point, rng)
}

pub fn run_ignore<E: Environment + ?Sized>(
    cfg: &AgentConfig,
    env: &E,
    change_point: usize,
    rng: &mut RngStream,
) -> Result<RunResult> {
    run_agent(AgentKind::Ignore, cfg, env, change_point, rng)
}

/// Runs one agent for `cfg.horizon` steps. `change_point` is the true change
/// time of `env`; it drives the oracle's switch, run classification and the
/// discount reset in the reward accounting.
pub fn run_agent<E: Environment + ?Sized>(
    kind: AgentKind,
    cfg: &AgentConfig,
    env: &E,
    change_point: usize,
    rng: &mut RngStream,
) -> Result<RunResult> {
    run_agent_observed(kind, cfg, env, change_point, rng, |_, _, _| {})
}

/// [`run_agent`], calling `observe(t, phase, q)` at the start of every step
/// with the table the agent is about to act on.
pub fn run_agent_observed<E: Environment + ?Sized, F: FnMut(usize, Phase, &QTable)>(
    kind: AgentKind,
    cfg: &AgentConfig,
    env: &E,
    change_point: usize,
    rng: &mut RngStream,
    mut observe: F,
) -> Result<RunResult> {
    let (ns, na) = (env.n_states(), env.n_actions());
    cfg.validate(ns, na)?;
    if kind == AgentKind::Ttaql {
        cfg.validate_two_threshold()?;
    }

    let mut learner = QLearner::new(init_qtable(&cfg.pre_init, ns, na, rng)?, cfg.schedule);
    let mut detector = CusumDetector::new(cfg.direction, cfg.eta);
    let mut resolved: Option<Resolved> = None;
    let mut rewards = Vec::with_capacity(cfg.horizon);
    let mut phases = Vec::with_capacity(cfg.horizon);
    let mut detection: Option<usize> = None;
    let mut suspect = false;
    let mut s = cfg.start_state;

    for t in 0..cfg.horizon {
        if kind == AgentKind::Oracle && t == change_point {
            learner.restart(init_qtable(&cfg.post_init, ns, na, rng)?);
            detection = Some(t);
        }

        let phase = if detection.is_some() {
            Phase::Relearning
        } else if suspect {
            Phase::Suspect
        } else {
            Phase::Learning
        };
        phases.push(phase);
        observe(t, phase, &learner.q);

        let a = if suspect {
            cfg.qcd_policy[s]
        } else {
            learner.act(s, rng)
        };
        let (s2, r) = env.step(t, s, a, rng)?;
        if !suspect {
            learner.learn(s, a, r, s2);
        }
        rewards.push(r);
        s = s2;

        if !kind.has_detector() || detection.is_some() {
            continue;
        }
        if t + 1 == cfg.delta {
            let baseline = baseline_stats(&rewards, cfg.tau, cfg.delta)?;
            detector.arm(baseline);
            let (alarm, suspect_abs) = match kind {
                AgentKind::Ttaql => (cfg.thresholds.confirm, Some(detector.resolve(cfg.thresholds.suspect)?)),
                _ => (cfg.thresholds.single, None),
            };
            resolved = Some(Resolved {
                baseline,
                alarm_abs: detector.resolve(alarm)?,
                suspect_abs,
            });
        } else if t >= cfg.delta {
            let res = resolved.as_ref().expect("armed at the end of the baseline window");
            detector.update(r)?;
            let fired = match res.suspect_abs {
                Some(b) => {
                    suspect = detector.check_alarm(b);
                    suspect && detector.check_alarm(res.alarm_abs)
                }
                None => detector.check_alarm(res.alarm_abs),
            };
            if fired {
                detection = Some(t);
                suspect = false;
                detector.disarm();
                learner.restart(init_qtable(&cfg.post_init, ns, na, rng)?);
            }
        }
    }

    let classification = Classification::of(detection, change_point);
    let (total, post_change) = discounted_return(&rewards, cfg.schedule.beta, change_point);
    Ok(RunResult {
        agent: kind,
        rewards,
        phases,
        detection,
        classification,
        change_point,
        total,
        post_change,
        resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inventory::{exact_inventory_kernel, full_stock_map, DemandModel, InventoryParams};
    use crate::mdp::NonstationaryProcess;
    use crate::qlearn::InitKind;

    /// Action-independent rewards: alternating `mu +- 1` before the change,
    /// a constant `mu - drop` from the change on.
    struct Scripted {
        change_point: usize,
        drop: f64,
    }

    impl Environment for Scripted {
        fn n_states(&self) -> usize {
            1
        }
        fn n_actions(&self) -> usize {
            1
        }
        fn step(&self, t: usize, _s: usize, _a: usize, _rng: &mut RngStream) -> Result<(usize, f64)> {
            let r = if t < self.change_point {
                10.0 + if t.is_multiple_of(2) { 1.0 } else { -1.0 }
            } else {
                10.0 - self.drop
            };
            Ok((0, r))
        }
    }

    fn scripted_cfg(single: f64) -> AgentConfig {
        AgentConfig {
            horizon: 400,
            tau: 50,
            delta: 150,
            start_state: 0,
            schedule: LearningSchedule::default(),
            pre_init: InitStrategy::new(InitKind::Monotone, 1.0),
            post_init: InitStrategy::new(InitKind::Monotone, 1.0),
            direction: Direction::HighToLow,
            eta: 0.92,
            thresholds: Thresholds {
                single,
                suspect: single,
                confirm: single,
            },
            qcd_policy: vec![0],
        }
    }

    #[test]
    fn deterministic_drop_delay() {
        // window of alternating +-1 has sd0 = sqrt(100/99)
        let sd0 = (100.0f64 / 99.0).sqrt();
        let env = Scripted {
            change_point: 200,
            drop: 10.0 * sd0,
        };
        let cfg = scripted_cfg(30.0);
        let res = run_staql(&cfg, &env, 200, &mut RngStream::new(0)).unwrap();
        // each post-change step adds -(10 - 0.92) sd0; the k-th step crosses 30 sd0
        let k = (30.0f64 / (10.0 - 0.92)).ceil() as usize;
        assert_eq!(res.classification, Classification::TrueDetect);
        assert_eq!(res.delay(), Some(k - 1));
        let r = res.resolved.unwrap();
        assert!((r.baseline.sd0 - sd0).abs() < 1e-12);
        assert!((r.alarm_abs - 30.0 * sd0).abs() < 1e-9);
    }

    #[test]
    fn classification_rules() {
        assert_eq!(Classification::of(None, 10), Classification::Miss);
        assert_eq!(Classification::of(Some(9), 10), Classification::FalseAlarm);
        assert_eq!(Classification::of(Some(10), 10), Classification::TrueDetect);
    }

    #[test]
    fn ttaql_rejects_inverted_thresholds() {
        let mut cfg = scripted_cfg(5.0);
        cfg.thresholds.suspect = 6.0;
        let env = Scripted {
            change_point: 200,
            drop: 1.0,
        };
        assert!(matches!(
            run_ttaql(&cfg, &env, 200, &mut RngStream::new(0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = scripted_cfg(5.0);
        cfg.delta = cfg.horizon;
        assert!(cfg.validate(1, 1).is_err());
        let mut cfg = scripted_cfg(5.0);
        cfg.qcd_policy = vec![3];
        assert!(cfg.validate(1, 1).is_err());
    }

    fn inventory_setup(gamma: usize) -> (AgentConfig, NonstationaryProcess) {
        let p = InventoryParams::default();
        let pre = exact_inventory_kernel(&p, &DemandModel::new(4.0).unwrap()).unwrap();
        let post = exact_inventory_kernel(&p, &DemandModel::new(1.8).unwrap()).unwrap();
        let proc = NonstationaryProcess::new(pre, post, gamma).unwrap();
        let cfg = AgentConfig {
            horizon: 2000,
            tau: 500,
            delta: 600,
            start_state: 0,
            schedule: LearningSchedule::default(),
            pre_init: InitStrategy::new(InitKind::Monotone, 32.0),
            post_init: InitStrategy::new(InitKind::Random, 14.4),
            direction: Direction::HighToLow,
            eta: 0.92,
            thresholds: Thresholds {
                single: 6.0,
                suspect: 3.35,
                confirm: 6.67,
            },
            qcd_policy: full_stock_map(5),
        };
        (cfg, proc)
    }

    #[test]
    fn phases_partition_the_horizon() {
        let (cfg, proc) = inventory_setup(1000);
        for seed in 0..20 {
            let r = run_ttaql(&cfg, &proc, 1000, &mut RngStream::for_run(3, seed)).unwrap();
            assert_eq!(r.phases.len(), cfg.horizon);
            assert_eq!(r.rewards.len(), cfg.horizon);
            // learning/suspect phases come first, relearning is a suffix
            let first_relearn = r
                .phases
                .iter()
                .position(|p| *p == Phase::Relearning)
                .unwrap_or(cfg.horizon);
            assert!(r.phases[first_relearn..].iter().all(|p| *p == Phase::Relearning));
            assert_eq!(first_relearn, r.detection.map_or(cfg.horizon, |d| d + 1));
            assert!(r.phases[..cfg.delta.min(first_relearn)]
                .iter()
                .all(|p| *p == Phase::Learning));
        }
    }

    #[test]
    fn oracle_switches_exactly_at_change() {
        let (cfg, proc) = inventory_setup(1000);
        let r = run_oracle(&cfg, &proc, 1000, &mut RngStream::new(1)).unwrap();
        assert_eq!(r.detection, Some(1000));
        assert_eq!(r.delay(), Some(0));
        assert_eq!(r.phases[999], Phase::Learning);
        assert_eq!(r.phases[1000], Phase::Relearning);
    }

    #[test]
    fn oracle_without_change_is_plain_learning() {
        let (cfg, _) = inventory_setup(1000);
        let p = InventoryParams::default();
        let pre = exact_inventory_kernel(&p, &DemandModel::new(4.0).unwrap()).unwrap();
        let proc = NonstationaryProcess::new(pre.clone(), pre, cfg.horizon).unwrap();
        let oracle = run_oracle(&cfg, &proc, cfg.horizon, &mut RngStream::new(2)).unwrap();
        let ignore = run_ignore(&cfg, &proc, cfg.horizon, &mut RngStream::new(2)).unwrap();
        assert_eq!(oracle.rewards, ignore.rewards);
        assert_eq!(oracle.classification, Classification::Miss);
    }

    #[test]
    fn ignore_never_detects() {
        let (cfg, proc) = inventory_setup(1000);
        let r = run_ignore(&cfg, &proc, 1000, &mut RngStream::new(4)).unwrap();
        assert_eq!(r.detection, None);
        assert_eq!(r.classification, Classification::Miss);
        assert!(r.phases.iter().all(|p| *p == Phase::Learning));
    }
}
