//! Exact planning versus Q-learning on the pre-change model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{pool, ExperimentConfig};
use crate::error::Result;
use crate::mdp::{bellman_residual, value_iteration};
use crate::qlearn::{init_qtable, run_q_learning, InitStrategy, QLearner};
use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub tol: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `tol / (1 - beta)`.
    pub residual_bound: f64,
    pub vi_policy: Vec<usize>,
    pub vi_values: Vec<f64>,
    /// Per state, every action whose optimal Q-value ties the best one.
    pub optimal_actions: Vec<Vec<usize>>,
    pub runs: usize,
    pub steps: usize,
    /// Runs whose greedy policy equals `vi_policy` state by state.
    pub exact_matches: usize,
    /// Runs whose greedy action is optimal in every state.
    pub optimal_matches: usize,
    pub learned_policies: Vec<Vec<usize>>,
}

impl OracleCheck {
    pub fn residual_ok(&self) -> bool {
        self.residual <= self.residual_bound
    }
}

/// Solves the pre-change model by value iteration and compares with the
/// greedy policies of `runs` Q-learning runs of `cfg.horizon` steps each.
/// `init` overrides the configured pre-change initialisation.
pub fn oracle_check(cfg: &ExperimentConfig, runs: usize, tol: f64, init: Option<InitStrategy>) -> Result<OracleCheck> {
    cfg.validate()?;
    let env = cfg.process()?;
    let mdp = &env.pre;
    let plan = value_iteration(mdp, cfg.beta, tol)?;
    let residual = bellman_residual(mdp, &plan.q, cfg.beta);
    let scale = plan.q.values().iter().fold(1.0f64, |m, x| m.max(x.abs()));
    let optimal_actions: Vec<Vec<usize>> = (0..mdp.n_states())
        .map(|s| {
            let best = plan.q.max_value(s);
            (0..mdp.n_actions())
                .filter(|&a| best - plan.q.get(s, a) <= 1e-9 * scale)
                .collect()
        })
        .collect();

    let init = init.unwrap_or_else(|| cfg.pre_init_strategy());
    let stationary = crate::mdp::NonstationaryProcess::new(mdp.clone(), mdp.clone(), cfg.horizon)?;
    let learned_policies: Vec<Vec<usize>> = pool(cfg.jobs)?.install(|| {
        (0..runs)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::for_run(cfg.seed, i as u64);
                let q = init_qtable(&init, mdp.n_states(), mdp.n_actions(), &mut rng)?;
                let mut learner = QLearner::new(q, cfg.schedule());
                run_q_learning(&stationary, &mut learner, cfg.start_state, cfg.horizon, &mut rng)?;
                Ok(learner.q.greedy_policy())
            })
            .collect::<Result<_>>()
    })?;
    let exact_matches = learned_policies.iter().filter(|p| **p == plan.policy).count();
    let optimal_matches = learned_policies
        .iter()
        .filter(|p| p.iter().zip(&optimal_actions).all(|(a, set)| set.contains(a)))
        .count();

    Ok(OracleCheck {
        tol,
        iterations: plan.iterations,
        residual,
        residual_bound: tol / (1.0 - cfg.beta),
        vi_policy: plan.policy,
        vi_values: plan.values,
        optimal_actions,
        runs,
        steps: cfg.horizon,
        exact_matches,
        optimal_matches,
        learned_policies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qlearn::InitKind;

    #[test]
    fn small_discount_check() {
        let cfg = ExperimentConfig {
            beta: 0.9,
            horizon: 2000,
            jobs: 1,
            ..ExperimentConfig::default()
        };
        let chk = oracle_check(&cfg, 4, 1e-8, Some(InitStrategy::new(InitKind::Monotone, 32.0))).unwrap();
        assert!(chk.residual_ok());
        assert_eq!(chk.learned_policies.len(), 4);
        assert!(chk.exact_matches <= chk.optimal_matches);
        for (s, set) in chk.optimal_actions.iter().enumerate() {
            assert!(set.contains(&chk.vi_policy[s]));
        }
    }
}
