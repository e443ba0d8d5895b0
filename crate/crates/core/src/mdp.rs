//! Finite MDPs, the single-change-point process, exact planning and
//! discounted-return accounting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qlearn::QTable;
use crate::rng::RngStream;

const ROW_SUM_TOL: f64 = 1e-9;

/// Anything an agent can act in: a (possibly time-varying) controlled
/// Markov chain that returns the next state and reward for one step.
pub trait Environment {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn step(&self, t: usize, s: usize, a: usize, rng: &mut RngStream) -> Result<(usize, f64)>;
}

/// Dense finite MDP: `kernel[s][a][s']` and `reward[s][a][s']`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    cdf: Vec<f64>,
}

impl TabularMdp {
    /// Builds a model from flat `S*A*S` tables, validating that every row
    /// is a probability distribution and every reward is finite.
    pub fn new(n_states: usize, n_actions: usize, kernel: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Model("state and action spaces must be nonempty".into()));
        }
        let len = n_states * n_actions * n_states;
        if kernel.len() != len || reward.len() != len {
            return Err(Error::Model(format!(
                "expected {len} kernel and reward entries, got {} and {}",
                kernel.len(),
                reward.len()
            )));
        }
        let mut mdp = Self {
            n_states,
            n_actions,
            kernel,
            reward,
            cdf: Vec::new(),
        };
        mdp.validate()?;
        mdp.rebuild_cdf();
        Ok(mdp)
    }

    /// Builds a model from closures over `(s, a, s')`.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        kernel: impl Fn(usize, usize, usize) -> f64,
        reward: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut k = Vec::with_capacity(n_states * n_actions * n_states);
        let mut r = Vec::with_capacity(k.capacity());
        for s in 0..n_states {
            for a in 0..n_actions {
                for s2 in 0..n_states {
                    k.push(kernel(s, a, s2));
                    r.push(reward(s, a, s2));
                }
            }
        }
        Self::new(n_states, n_actions, k, r)
    }

    fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let row = self.row(s, a);
                if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(Error::Model(format!(
                        "kernel({s}, {a}, .) has entry {p} outside [0, 1]"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Model(format!("kernel({s}, {a}, .) sums to {sum}")));
                }
            }
        }
        if let Some(r) = self.reward.iter().find(|r| !r.is_finite()) {
            return Err(Error::Model(format!("non-finite reward {r}")));
        }
        Ok(())
    }

    fn rebuild_cdf(&mut self) {
        let n = self.n_states;
        self.cdf = Vec::with_capacity(self.kernel.len());
        for row in self.kernel.chunks(n) {
            let mut acc = 0.0;
            for p in row {
                acc += p;
                self.cdf.push(acc);
            }
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    fn offset(&self, s: usize, a: usize) -> usize {
        (s * self.n_actions + a) * self.n_states
    }

    /// Transition distribution over next states for `(s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.kernel[o..o + self.n_states]
    }

    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let o = self.offset(s, a);
        &self.reward[o..o + self.n_states]
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.kernel[self.offset(s, a) + s_next]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.reward[self.offset(s, a) + s_next]
    }

    /// Overwrites one kernel row, re-validating the model.
    pub fn set_row(&mut self, s: usize, a: usize, row: &[f64]) -> Result<()> {
        self.check(s, a)?;
        if row.len() != self.n_states {
            return Err(Error::Argument(format!(
                "row has {} entries, expected {}",
                row.len(),
                self.n_states
            )));
        }
        let o = self.offset(s, a);
        let old: Vec<f64> = self.kernel[o..o + self.n_states].to_vec();
        self.kernel[o..o + self.n_states].copy_from_slice(row);
        if let Err(e) = self.validate() {
            self.kernel[o..o + self.n_states].copy_from_slice(&old);
            return Err(e);
        }
        self.rebuild_cdf();
        Ok(())
    }

    fn check(&self, s: usize, a: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::Argument(format!("state {s} out of range 0..{}", self.n_states)));
        }
        if a >= self.n_actions {
            return Err(Error::Argument(format!(
                "action {a} out of range 0..{}",
                self.n_actions
            )));
        }
        Ok(())
    }

    /// Draws the next state by inverse CDF over the row in ascending state
    /// order, consuming exactly one uniform.
    pub fn sample_next_state(&self, s: usize, a: usize, rng: &mut RngStream) -> Result<usize> {
        self.check(s, a)?;
        Ok(self.next_state_for(s, a, rng.uniform()))
    }

    /// Inverse-CDF lookup for a given uniform `u` in `[0, 1)`.
    pub fn next_state_for(&self, s: usize, a: usize, u: f64) -> usize {
        let o = self.offset(s, a);
        let cdf = &self.cdf[o..o + self.n_states];
        match cdf.iter().position(|&c| u < c) {
            Some(i) => i,
            // Rounding left the row total just below u: take the last state
            // that carries mass.
            None => self.row(s, a).iter().rposition(|&p| p > 0.0).unwrap_or(0),
        }
    }

    /// Expected one-step reward `sum_s' T(s,a,s') R(s,a,s')`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.row(s, a)
            .iter()
            .zip(self.reward_row(s, a))
            .map(|(p, r)| p * r)
            .sum()
    }
}

impl Environment for TabularMdp {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn step(&self, _t: usize, s: usize, a: usize, rng: &mut RngStream) -> Result<(usize, f64)> {
        let s2 = self.sample_next_state(s, a, rng)?;
        Ok((s2, self.reward(s, a, s2)))
    }
}

/// Pre-change model, post-change model and the change point.
///
/// The step taken at time `t` uses `pre` when `t < change_point` and `post`
/// otherwise.
#[derive(Debug, Clone)]
pub struct NonstationaryProcess {
    pub pre: TabularMdp,
    pub post: TabularMdp,
    pub change_point: usize,
}

impl NonstationaryProcess {
    pub fn new(pre: TabularMdp, post: TabularMdp, change_point: usize) -> Result<Self> {
        if pre.n_states != post.n_states || pre.n_actions != post.n_actions {
            return Err(Error::Model(format!(
                "pre ({}x{}) and post ({}x{}) models have different spaces",
                pre.n_states, pre.n_actions, post.n_states, post.n_actions
            )));
        }
        Ok(Self {
            pre,
            post,
            change_point,
        })
    }

    /// Model governing the transition taken at time `t`.
    #[inline]
    pub fn model_at(&self, t: usize) -> &TabularMdp {
        if t < self.change_point {
            &self.pre
        } else {
            &self.post
        }
    }

    pub fn env_step(&self, t: usize, s: usize, a: usize, rng: &mut RngStream) -> Result<(usize, f64)> {
        let m = self.model_at(t);
        let s2 = m.sample_next_state(s, a, rng)?;
        Ok((s2, m.reward(s, a, s2)))
    }
}

impl Environment for NonstationaryProcess {
    fn n_states(&self) -> usize {
        self.pre.n_states
    }

    fn n_actions(&self) -> usize {
        self.pre.n_actions
    }

    fn step(&self, t: usize, s: usize, a: usize, rng: &mut RngStream) -> Result<(usize, f64)> {
        self.env_step(t, s, a, rng)
    }
}

/// One logged transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
    pub reward: f64,
}

/// Runs a fixed Markov map for `steps` transitions starting at time 0.
pub fn rollout<E: Environment + ?Sized>(
    env: &E,
    policy: &[usize],
    start: usize,
    steps: usize,
    rng: &mut RngStream,
) -> Result<Vec<StepRecord>> {
    if policy.len() != env.n_states() {
        return Err(Error::Argument(format!(
            "policy covers {} states, environment has {}",
            policy.len(),
            env.n_states()
        )));
    }
    let mut s = start;
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let a = policy[s];
        let (s2, r) = env.step(t, s, a, rng)?;
        out.push(StepRecord {
            t,
            state: s,
            action: a,
            next_state: s2,
            reward: r,
        });
        s = s2;
    }
    Ok(out)
}

/// Output of exact planning.
#[derive(Debug, Clone)]
pub struct Plan {
    pub values: Vec<f64>,
    pub q: QTable,
    pub policy: Vec<usize>,
    pub iterations: usize,
}

/// Value iteration until the sup-norm change between sweeps drops below
/// `tol`. Ties in the greedy policy go to the lowest action index.
pub fn value_iteration(mdp: &TabularMdp, beta: f64, tol: f64) -> Result<Plan> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Argument(format!("discount {beta} must lie in (0, 1)")));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Argument(format!("tolerance {tol} must be positive")));
    }
    mdp.validate()?;

    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let expected: Vec<f64> = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| mdp.expected_reward(s, a))
        .collect();
    let mut v = vec![0.0; ns];
    let mut q = vec![0.0; ns * na];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for s in 0..ns {
            for a in 0..na {
                let cont: f64 = mdp.row(s, a).iter().zip(&v).map(|(p, vv)| p * vv).sum();
                q[s * na + a] = expected[s * na + a] + beta * cont;
            }
        }
        let mut change: f64 = 0.0;
        for s in 0..ns {
            let best = q[s * na..(s + 1) * na]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - v[s]).abs());
            v[s] = best;
        }
        if change < tol {
            break;
        }
    }
    let q = QTable::from_flat(ns, na, q)?;
    let policy = q.greedy_policy();
    Ok(Plan {
        values: v,
        q,
        policy,
        iterations,
    })
}

/// Largest absolute Bellman-optimality residual of `q` under `mdp`.
pub fn bellman_residual(mdp: &TabularMdp, q: &QTable, beta: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let target: f64 = (0..mdp.n_states)
                .map(|s2| mdp.prob(s, a, s2) * (mdp.reward(s, a, s2) + beta * q.max_value(s2)))
                .sum();
            worst = worst.max((q.get(s, a) - target).abs());
        }
    }
    worst
}

/// Discounted return with the discount clock reset at the change point:
/// `sum_{t<gamma} beta^t R_t + sum_{t>=gamma} beta^(t-gamma) R_t`.
///
/// Returns `(total, post_change)` where `post_change` is the second sum.
/// `change_point >= rewards.len()` means no change inside the horizon.
pub fn discounted_return(rewards: &[f64], beta: f64, change_point: usize) -> (f64, f64) {
    let split = change_point.min(rewards.len());
    let discounted = |xs: &[f64]| {
        let mut w = 1.0;
        let mut acc = 0.0;
        for r in xs {
            acc += w * r;
            w *= beta;
        }
        acc
    };
    let pre = discounted(&rewards[..split]);
    let post = discounted(&rewards[split..]);
    (pre + post, post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn single_state(reward: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![reward]).unwrap()
    }

    fn two_state_coin(p1: f64) -> TabularMdp {
        TabularMdp::from_fn(2, 1, |_, _, s2| if s2 == 1 { p1 } else { 1.0 - p1 }, |_, _, _| 0.0).unwrap()
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        let err = TabularMdp::new(2, 1, vec![0.5, 0.4, 0.5, 0.5], vec![0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
        let err = TabularMdp::new(1, 1, vec![1.0], vec![f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn set_row_revalidates() {
        let mut m = two_state_coin(0.5);
        assert!(m.set_row(0, 0, &[0.9, 0.2]).is_err());
        assert_eq!(m.row(0, 0), &[0.5, 0.5]);
        m.set_row(0, 0, &[0.0, 1.0]).unwrap();
        let mut rng = RngStream::new(0);
        assert_eq!(m.sample_next_state(0, 0, &mut rng).unwrap(), 1);
    }

    #[test]
    fn point_mass_row() {
        let m = TabularMdp::from_fn(3, 1, |_, _, s2| if s2 == 2 { 1.0 } else { 0.0 }, |_, _, _| 0.0).unwrap();
        let mut rng = RngStream::new(3);
        for _ in 0..100 {
            assert_eq!(m.sample_next_state(0, 0, &mut rng).unwrap(), 2);
        }
    }

    #[test]
    fn inverse_cdf_is_ascending() {
        let m = two_state_coin(0.5);
        assert_eq!(m.next_state_for(0, 0, 0.75), 1);
        assert_eq!(m.next_state_for(0, 0, 0.25), 0);
        assert_eq!(m.next_state_for(0, 0, 0.5), 1);
    }

    #[test]
    fn out_of_range_is_argument_error() {
        let m = two_state_coin(0.5);
        let mut rng = RngStream::new(0);
        assert!(matches!(m.sample_next_state(2, 0, &mut rng), Err(Error::Argument(_))));
        assert!(matches!(m.sample_next_state(0, 1, &mut rng), Err(Error::Argument(_))));
    }

    #[test]
    fn frequencies_match_row() {
        let row = [0.2, 0.5, 0.3];
        let m = TabularMdp::from_fn(3, 1, |_, _, s2| row[s2], |_, _, _| 0.0).unwrap();
        let mut rng = RngStream::new(11);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[m.sample_next_state(0, 0, &mut rng).unwrap()] += 1;
        }
        for (c, p) in counts.iter().zip(row) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn change_point_boundary() {
        // pre always goes to 0, post always goes to 1
        let pre = TabularMdp::from_fn(2, 1, |_, _, s2| (s2 == 0) as u8 as f64, |_, _, _| 0.0).unwrap();
        let post = TabularMdp::from_fn(2, 1, |_, _, s2| (s2 == 1) as u8 as f64, |_, _, _| 1.0).unwrap();
        let proc = NonstationaryProcess::new(pre.clone(), post.clone(), 1000).unwrap();
        let mut rng = RngStream::new(0);
        assert_eq!(proc.env_step(999, 0, 0, &mut rng).unwrap(), (0, 0.0));
        assert_eq!(proc.env_step(1000, 0, 0, &mut rng).unwrap(), (1, 1.0));

        let immediate = NonstationaryProcess::new(pre, post, 0).unwrap();
        for t in [0, 1, 500] {
            assert_eq!(immediate.env_step(t, 0, 0, &mut rng).unwrap(), (1, 1.0));
        }
    }

    #[test]
    fn mismatched_spaces_rejected() {
        let a = two_state_coin(0.5);
        let b = single_state(1.0);
        assert!(NonstationaryProcess::new(a, b, 3).is_err());
    }

    #[test]
    fn value_iteration_geometric_series() {
        let plan = value_iteration(&single_state(1.0), 0.9, 1e-10).unwrap();
        assert_relative_eq!(plan.values[0], 10.0, epsilon = 1e-8);
    }

    #[test]
    fn value_iteration_zero_reward() {
        let m = TabularMdp::from_fn(3, 2, |_, _, s2| (s2 == 0) as u8 as f64, |_, _, _| 0.0).unwrap();
        let plan = value_iteration(&m, 0.9, 1e-10).unwrap();
        assert!(plan.values.iter().all(|v| *v == 0.0));
        assert_eq!(plan.policy, vec![0, 0, 0]);
    }

    #[test]
    fn value_iteration_rejects_bad_discount() {
        assert!(value_iteration(&single_state(1.0), 1.0, 1e-6).is_err());
        assert!(value_iteration(&single_state(1.0), 0.5, 0.0).is_err());
    }

    #[test]
    fn discounted_return_cases() {
        assert_eq!(discounted_return(&[0.0; 5], 0.9, 2), (0.0, 0.0));
        assert_eq!(discounted_return(&[], 0.9, 0), (0.0, 0.0));
        assert_eq!(discounted_return(&[1.0; 4], 1.0, 2), (4.0, 2.0));
        assert_eq!(discounted_return(&[2.0, 4.0], 0.5, 1), (6.0, 4.0));
        // gamma == len: no change in horizon
        assert_eq!(discounted_return(&[2.0, 4.0], 0.5, 2), (4.0, 0.0));
    }

    #[test]
    fn zero_change_point_is_plain_discounted_sum() {
        let r = [1.0, -2.0, 3.5, 0.25];
        let plain: f64 = r.iter().enumerate().map(|(t, x)| 0.8f64.powi(t as i32) * x).sum();
        let (total, post) = discounted_return(&r, 0.8, 0);
        assert_relative_eq!(total, plain, epsilon = 1e-12);
        assert_relative_eq!(post, plain, epsilon = 1e-12);
    }
}
