//! Tabular Q-learning with linearly decaying exploration and learning rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Environment;
use crate::rng::RngStream;

/// Dense `state x action` table of value estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            values: vec![0.0; n_states * n_actions],
        }
    }

    pub fn from_flat(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Argument("Q-table dimensions must be positive".into()));
        }
        if values.len() != n_states * n_actions {
            return Err(Error::Argument(format!(
                "expected {} values, got {}",
                n_states * n_actions,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("Q-table entries must be finite".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
    }

    /// Greedy action in `s`, lowest index on ties.
    #[inline]
    pub fn argmax(&self, s: usize) -> usize {
        let row = self.row(s);
        let mut best = 0;
        for (a, v) in row.iter().enumerate().skip(1) {
            if *v > row[best] {
                best = a;
            }
        }
        best
    }

    #[inline]
    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s)[self.argmax(s)]
    }

    pub fn greedy_policy(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| self.argmax(s)).collect()
    }
}

pub fn greedy_policy(q: &QTable) -> Vec<usize> {
    q.greedy_policy()
}

/// Step-size and exploration schedule. Both rates start at their initial
/// value and drop by `delta` per environment step until they reach their
/// cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningSchedule {
    pub alpha0: f64,
    pub alpha_cut: f64,
    pub eps0: f64,
    pub eps_cut: f64,
    pub delta: f64,
    pub beta: f64,
}

impl Default for LearningSchedule {
    fn default() -> Self {
        Self {
            alpha0: 0.2,
            alpha_cut: 0.05,
            eps0: 0.2,
            eps_cut: 0.05,
            delta: 0.001,
            beta: 0.9999,
        }
    }
}

impl LearningSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.alpha_cut
            && self.alpha_cut <= self.alpha0
            && self.alpha0 <= 1.0
            && 0.0 <= self.eps_cut
            && self.eps_cut <= self.eps0
            && self.eps0 <= 1.0
            && self.delta >= 0.0
            && 0.0 < self.beta
            && self.beta < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid learning schedule {self:?}")))
        }
    }
}

/// One linear decrement with a floor at `cutoff`.
#[inline]
pub fn decay(value: f64, delta: f64, cutoff: f64) -> f64 {
    if value > cutoff {
        (value - delta).max(cutoff)
    } else {
        value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// I.i.d. uniform entries on `[0, scale]`.
    Random,
    /// Greedy map rises then falls across states.
    Pyramid,
    /// Greedy map is the order-up-to-capacity line `s -> N - s`.
    Monotone,
}

impl std::str::FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "pyramid" => Ok(Self::Pyramid),
            "monotone" | "smart" => Ok(Self::Monotone),
            other => Err(Error::Config(format!("unknown Q-table initialisation '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitStrategy {
    pub kind: InitKind,
    pub scale: f64,
    /// Order-up-to level of the monotone map `s -> max(level - s, 0)`;
    /// `None` means the top state index (capacity).
    #[serde(default)]
    pub level: Option<usize>,
}

impl InitStrategy {
    pub fn new(kind: InitKind, scale: f64) -> Self {
        Self {
            kind,
            scale,
            level: None,
        }
    }

    pub fn with_level(mut self, level: usize) -> Self {
        self.level = Some(level);
        self
    }
}

/// Peak action of the pyramid map at state `s`: climbs by one per state up
/// to the middle state, then descends symmetrically.
fn pyramid_peak(s: usize, n_states: usize, n_actions: usize) -> usize {
    let last = n_states - 1;
    s.min(last - s).min(n_actions - 1)
}

pub fn init_qtable(strategy: &InitStrategy, n_states: usize, n_actions: usize, rng: &mut RngStream) -> Result<QTable> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::Argument("Q-table dimensions must be positive".into()));
    }
    if !strategy.scale.is_finite() {
        return Err(Error::Config(format!("init scale {} is not finite", strategy.scale)));
    }
    let mut q = QTable::zeros(n_states, n_actions);
    let scale = strategy.scale;
    match strategy.kind {
        InitKind::Random => {
            for v in q.values.iter_mut() {
                *v = rng.uniform() * scale;
            }
        }
        InitKind::Pyramid => {
            // Each row is a tent centred on the peak action.
            for s in 0..n_states {
                let peak = pyramid_peak(s, n_states, n_actions) as f64;
                for a in 0..n_actions {
                    let dist = (a as f64 - peak).abs();
                    q.set(s, a, scale * (1.0 - dist / n_actions as f64));
                }
            }
        }
        InitKind::Monotone => {
            let top = strategy.level.unwrap_or(n_states - 1);
            for s in 0..n_states {
                q.set(s, top.saturating_sub(s).min(n_actions - 1), scale);
            }
        }
    }
    Ok(q)
}

/// Epsilon-greedy choice. One uniform decides whether to explore; a second
/// is drawn only when exploring.
#[inline]
pub fn select_action(q: &QTable, s: usize, eps: f64, rng: &mut RngStream) -> usize {
    if rng.uniform() < eps {
        rng.index(q.n_actions)
    } else {
        q.argmax(s)
    }
}

/// One temporal-difference step on entry `(s, a)`. Returns the TD error.
#[inline]
pub fn td_update(q: &mut QTable, s: usize, a: usize, r: f64, s_next: usize, alpha: f64, beta: f64) -> f64 {
    let td = r + beta * q.max_value(s_next) - q.get(s, a);
    let i = s * q.n_actions + a;
    q.values[i] += alpha * td;
    td
}

/// A Q-table together with the current exploration and learning rates.
#[derive(Debug, Clone)]
pub struct QLearner {
    pub q: QTable,
    pub schedule: LearningSchedule,
    pub eps: f64,
    pub alpha: f64,
}

impl QLearner {
    pub fn new(q: QTable, schedule: LearningSchedule) -> Self {
        Self {
            q,
            eps: schedule.eps0,
            alpha: schedule.alpha0,
            schedule,
        }
    }

    #[inline]
    pub fn act(&self, s: usize, rng: &mut RngStream) -> usize {
        select_action(&self.q, s, self.eps, rng)
    }

    /// TD update followed by one decay step of both rates.
    #[inline]
    pub fn learn(&mut self, s: usize, a: usize, r: f64, s_next: usize) -> f64 {
        let td = td_update(&mut self.q, s, a, r, s_next, self.alpha, self.schedule.beta);
        self.eps = decay(self.eps, self.schedule.delta, self.schedule.eps_cut);
        self.alpha = decay(self.alpha, self.schedule.delta, self.schedule.alpha_cut);
        td
    }

    /// Swap in a fresh table and restart both rates.
    pub fn restart(&mut self, q: QTable) {
        self.q = q;
        self.eps = self.schedule.eps0;
        self.alpha = self.schedule.alpha0;
    }
}

/// Plain Q-learning for `steps` environment steps from `start`.
/// Returns the per-step rewards.
pub fn run_q_learning<E: Environment + ?Sized>(
    env: &E,
    learner: &mut QLearner,
    start: usize,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut s = start;
    let mut rewards = Vec::with_capacity(steps);
    for t in 0..steps {
        let a = learner.act(s, rng);
        let (s2, r) = env.step(t, s, a, rng)?;
        learner.learn(s, a, r, s2);
        rewards.push(r);
        s = s2;
    }
    Ok(rewards)
}
