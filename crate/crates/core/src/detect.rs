//! Quickest change detection on reward and state streams.
//!
//! [`CusumDetector`] is the model-free reflected CUSUM on per-step rewards,
//! centred at a baseline mean estimated from a window of pre-change rewards
//! and guarded by a drift allowance `eta * sd0`:
//!
//! ```text
//! increase:  W_n = max(0, W_{n-1} + R_n - mu0 - eta sd0)
//! decrease:  W_n = min(0, W_{n-1} + R_n - mu0 + eta sd0)
//! ```
//!
//! An alarm is raised the first time `|W_n|` exceeds the threshold. Thresholds
//! are given in multiples of `sd0` and become absolute once the baseline is
//! known.
//!
//! [`GlrCusum`] is the model-based statistic on transition log-likelihood
//! ratios, for when both kernels are known.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::rng::RngStream;

/// Pre-change reward statistics over the window `[tau, delta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub mu0: f64,
    pub sd0: f64,
    pub tau: usize,
    pub delta: usize,
}

/// Sample mean and (n-1) standard deviation of `rewards[tau..delta]`.
pub fn baseline_stats(rewards: &[f64], tau: usize, delta: usize) -> Result<Baseline> {
    if delta <= tau || delta - tau < 2 {
        return Err(Error::Argument(format!(
            "baseline window [{tau}, {delta}) needs at least two rewards"
        )));
    }
    if rewards.len() < delta {
        return Err(Error::Argument(format!(
            "baseline window ends at {delta} but only {} rewards are available",
            rewards.len()
        )));
    }
    let w = &rewards[tau..delta];
    let n = w.len() as f64;
    let mu0 = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|r| (r - mu0).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(Baseline {
        mu0,
        sd0: var.sqrt(),
        tau,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Watch for a rise in mean reward; statistic is nonnegative.
    LowToHigh,
    /// Watch for a drop in mean reward; statistic is nonpositive.
    HighToLow,
    /// Run both recursions and report whichever has larger magnitude.
    TwoSided,
}

impl std::str::FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low_to_high" | "up" => Ok(Self::LowToHigh),
            "high_to_low" | "down" => Ok(Self::HighToLow),
            "two_sided" | "both" => Ok(Self::TwoSided),
            other => Err(Error::Config(format!("unknown detector direction '{other}'"))),
        }
    }
}

/// Nonparametric reflected CUSUM on rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct CusumDetector {
    direction: Direction,
    eta: f64,
    baseline: Option<Baseline>,
    up: f64,
    down: f64,
}

impl CusumDetector {
    pub fn new(direction: Direction, eta: f64) -> Self {
        Self {
            direction,
            eta,
            baseline: None,
            up: 0.0,
            down: 0.0,
        }
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn baseline(&self) -> Option<&Baseline> {
        self.baseline.as_ref()
    }

    pub fn is_armed(&self) -> bool {
        self.baseline.is_some()
    }

    /// Installs the baseline and clears the statistic.
    pub fn arm(&mut self, baseline: Baseline) {
        self.baseline = Some(baseline);
        self.reset();
    }

    pub fn disarm(&mut self) {
        self.baseline = None;
        self.reset();
    }

    pub fn reset(&mut self) {
        self.up = 0.0;
        self.down = 0.0;
    }

    /// Absolute threshold for a multiple of the baseline deviation.
    pub fn resolve(&self, sd_multiple: f64) -> Result<f64> {
        let b = self
            .baseline
            .as_ref()
            .ok_or_else(|| Error::State("detector is not armed".into()))?;
        Ok(sd_multiple * b.sd0)
    }

    /// Signed statistic: `up` for an increase detector, `down` for a
    /// decrease detector, the larger in magnitude for two-sided.
    pub fn statistic(&self) -> f64 {
        match self.direction {
            Direction::LowToHigh => self.up,
            Direction::HighToLow => self.down,
            Direction::TwoSided => {
                if self.up >= -self.down {
                    self.up
                } else {
                    self.down
                }
            }
        }
    }

    /// Feeds one reward and returns the updated statistic.
    pub fn update(&mut self, r: f64) -> Result<f64> {
        let b = self
            .baseline
            .ok_or_else(|| Error::State("CUSUM update before the baseline is set".into()))?;
        let guard = self.eta * b.sd0;
        let centred = r - b.mu0;
        if matches!(self.direction, Direction::LowToHigh | Direction::TwoSided) {
            self.up = (self.up + centred - guard).max(0.0);
        }
        if matches!(self.direction, Direction::HighToLow | Direction::TwoSided) {
            self.down = (self.down + centred + guard).min(0.0);
        }
        Ok(self.statistic())
    }

    /// `|W| > threshold`.
    #[inline]
    pub fn check_alarm(&self, threshold_abs: f64) -> bool {
        self.statistic().abs() > threshold_abs
    }
}

/// Outcome of a log-likelihood-ratio increment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GlrStep {
    Statistic(f64),
    /// The observed transition is impossible under the pre-change model.
    Impossible,
}

/// CUSUM on transition log-likelihood ratios `log(T_post / T_pre)`.
#[derive(Debug, Clone)]
pub struct GlrCusum<'a> {
    pre: &'a TabularMdp,
    post: &'a TabularMdp,
    w: f64,
    pub threshold: f64,
    impossible: bool,
}

impl<'a> GlrCusum<'a> {
    pub fn new(pre: &'a TabularMdp, post: &'a TabularMdp, threshold: f64) -> Result<Self> {
        if pre.n_states() != post.n_states() || pre.n_actions() != post.n_actions() {
            return Err(Error::Model("GLR models have different spaces".into()));
        }
        Ok(Self {
            pre,
            post,
            w: 0.0,
            threshold,
            impossible: false,
        })
    }

    pub fn statistic(&self) -> f64 {
        self.w
    }

    pub fn saw_impossible_transition(&self) -> bool {
        self.impossible
    }

    pub fn update(&mut self, s_prev: usize, a_prev: usize, s_curr: usize) -> GlrStep {
        let p0 = self.pre.prob(s_prev, a_prev, s_curr);
        if p0 <= 0.0 {
            self.impossible = true;
            self.w = f64::INFINITY;
            return GlrStep::Impossible;
        }
        let p1 = self.post.prob(s_prev, a_prev, s_curr);
        // p1 == 0 gives -inf, which the reflection at 0 absorbs.
        self.w = (self.w + (p1 / p0).ln()).max(0.0);
        GlrStep::Statistic(self.w)
    }

    pub fn check_alarm(&self) -> bool {
        self.w > self.threshold
    }

    pub fn reset(&mut self) {
        self.w = 0.0;
        self.impossible = false;
    }
}

/// Monte Carlo estimate of the information number along a policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InfoEstimate {
    /// Mean log-likelihood ratio per step (nats); `+inf` if a transition
    /// impossible under the pre-change model was observed.
    pub value: f64,
    /// Standard error of the mean, treating increments as independent.
    pub std_err: f64,
    pub steps: usize,
    pub impossible: bool,
}

/// Average of `log(T_post / T_pre)` along `n` steps simulated entirely under
/// the post-change model with the fixed map `policy`, starting in state 0.
pub fn estimate_information_number(
    policy: &[usize],
    pre: &TabularMdp,
    post: &TabularMdp,
    n: usize,
    rng: &mut RngStream,
) -> Result<InfoEstimate> {
    if policy.len() != post.n_states() {
        return Err(Error::Argument("policy length does not match the state space".into()));
    }
    if pre.n_states() != post.n_states() || pre.n_actions() != post.n_actions() {
        return Err(Error::Model("models have different spaces".into()));
    }
    if n == 0 {
        return Err(Error::Argument("need at least one step".into()));
    }
    let mut s = 0;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let a = policy[s];
        let s2 = post.sample_next_state(s, a, rng)?;
        let p0 = pre.prob(s, a, s2);
        if p0 <= 0.0 {
            return Ok(InfoEstimate {
                value: f64::INFINITY,
                std_err: f64::NAN,
                steps: n,
                impossible: true,
            });
        }
        let llr = (post.prob(s, a, s2) / p0).ln();
        sum += llr;
        sum_sq += llr * llr;
        s = s2;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(InfoEstimate {
        value: mean,
        std_err: (var / nf).sqrt(),
        steps: n,
        impossible: false,
    })
}
