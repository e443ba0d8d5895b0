//! Invariants checked over generated inputs.

use changeq::agents::{run_agent, run_agent_observed, AgentKind, Phase};
use changeq::detect::{Baseline, CusumDetector, Direction, GlrCusum};
use changeq::harness::ExperimentConfig;
use changeq::inventory::exact_inventory_kernel;
use changeq::mdp::discounted_return;
use changeq::qlearn::{decay, QTable};
use changeq::{DemandModel, InventoryParams, RngStream, TabularMdp};
use proptest::prelude::*;

fn baseline(mu0: f64, sd0: f64) -> Baseline {
    Baseline {
        mu0,
        sd0,
        tau: 0,
        delta: 2,
    }
}

fn random_mdp(ns: usize, na: usize, weights: &[f64]) -> TabularMdp {
    let mut kernel = Vec::with_capacity(ns * na * ns);
    for row in weights.chunks(ns).take(ns * na) {
        let total: f64 = row.iter().sum();
        kernel.extend(row.iter().map(|w| w / total));
    }
    TabularMdp::new(ns, na, kernel, vec![0.0; ns * na * ns]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(128) })]

    #[test]
    fn cusum_signs_hold(
        mu0 in -20.0..20.0f64,
        sd0 in 0.0..10.0f64,
        eta in 0.0..2.0f64,
        rewards in prop::collection::vec(-50.0..50.0f64, 1..200),
    ) {
        let mut up = CusumDetector::new(Direction::LowToHigh, eta);
        let mut down = CusumDetector::new(Direction::HighToLow, eta);
        let mut both = CusumDetector::new(Direction::TwoSided, eta);
        for d in [&mut up, &mut down, &mut both] {
            d.arm(baseline(mu0, sd0));
        }
        for r in rewards {
            let u = up.update(r).unwrap();
            let l = down.update(r).unwrap();
            let b = both.update(r).unwrap();
            prop_assert!(u >= 0.0);
            prop_assert!(l <= 0.0);
            prop_assert_eq!(b.abs(), u.abs().max(l.abs()));
        }
    }

    #[test]
    fn alarm_is_monotone_in_threshold(w in -10.0..10.0f64, a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let mut d = CusumDetector::new(Direction::LowToHigh, 0.0);
        d.arm(baseline(0.0, 1.0));
        d.update(w).unwrap();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(!d.check_alarm(hi) || d.check_alarm(lo));
    }

    #[test]
    fn decay_is_monotone_and_floored(v in 0.0..1.0f64, cut in 0.0..1.0f64, step in 1e-4..0.1f64, n in 1usize..2000) {
        let mut x = v;
        for _ in 0..n {
            let y = decay(x, step, cut);
            prop_assert!(y <= x);
            prop_assert!(y >= cut.min(v));
            x = y;
        }
        if n as f64 * step > v - cut + 1e-9 {
            prop_assert_eq!(x, cut.min(v));
        }
    }

    #[test]
    fn glr_recursion_equals_max_over_start(
        weights in prop::collection::vec(0.05..1.0f64, 3 * 2 * 3 * 2),
        path in prop::collection::vec((0usize..2, 0usize..3), 1..50),
    ) {
        let pre = random_mdp(3, 2, &weights[..18]);
        let post = random_mdp(3, 2, &weights[18..]);
        let mut glr = GlrCusum::new(&pre, &post, f64::INFINITY).unwrap();
        let mut s = 0;
        let mut llr = Vec::new();
        for (a, s2) in path {
            llr.push((post.prob(s, a, s2) / pre.prob(s, a, s2)).ln());
            glr.update(s, a, s2);
            // max over k of the sum llr[k..], the empty sum included
            let explicit = (0..=llr.len()).map(|k| llr[k..].iter().sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((glr.statistic() - explicit).abs() < 1e-9 * (1.0 + explicit.abs()));
            s = s2;
        }
    }

    #[test]
    fn inventory_kernel_is_stochastic(rate in 0.0..12.0f64, cap in 1usize..10) {
        let params = InventoryParams::with_capacity(cap);
        let mdp = exact_inventory_kernel(&params, &DemandModel::new(rate).unwrap()).unwrap();
        let bound = params.reward_bound();
        for s in 0..=cap {
            for a in 0..=cap {
                let row = mdp.row(s, a);
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                for (s2, p) in row.iter().enumerate() {
                    prop_assert!(*p >= 0.0);
                    if *p > 0.0 {
                        prop_assert!(s2 <= (s + a).min(cap));
                        prop_assert!(mdp.reward(s, a, s2).abs() <= bound);
                    }
                }
            }
        }
    }

    #[test]
    fn inventory_reward_matches_formula(s in 0usize..=5, a in 0usize..=5, d in 0u64..12) {
        let p = InventoryParams::default();
        let s2 = p.next_state(s, a, d).unwrap();
        let stock = (s + a).min(5);
        prop_assert_eq!(s2, stock.saturating_sub(d as usize));
        let want = -0.5 * f64::from(u8::from(a > 0)) - 3.0 * (a.min(5 - s) as f64) - 2.0 * s2 as f64
            + 8.0 * (stock - s2) as f64 - 4.8;
        prop_assert!((p.reward(s, a, s2).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn discounted_return_splits(rewards in prop::collection::vec(-10.0..10.0f64, 0..100), gamma in 0usize..120, beta in 0.5..1.0f64) {
        let (total, post) = discounted_return(&rewards, beta, gamma);
        let g = gamma.min(rewards.len());
        let pre: f64 = rewards[..g].iter().enumerate().map(|(t, r)| beta.powi(t as i32) * r).sum();
        let tail: f64 = rewards[g..].iter().enumerate().map(|(t, r)| beta.powi(t as i32) * r).sum();
        prop_assert!((post - tail).abs() < 1e-9);
        prop_assert!((total - pre - tail).abs() < 1e-9);
    }

    #[test]
    fn argmax_is_first_maximum(values in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 2.0]), 12)) {
        let q = QTable::from_flat(3, 4, values.clone()).unwrap();
        for s in 0..3 {
            let row = &values[s * 4..s * 4 + 4];
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(q.argmax(s), row.iter().position(|v| *v == best).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    /// The table is bit-for-bit unchanged across every suspect interval, and
    /// phases run learning -> (suspect <-> learning)* -> relearning.
    #[test]
    fn ttaql_freezes_learning_while_suspect(seed in any::<u64>()) {
        let cfg = ExperimentConfig::default();
        let env = cfg.process().unwrap();
        let agent = cfg.agent_config().unwrap();
        let mut rng = RngStream::for_run(seed, 0);
        let mut entered: Option<Vec<f64>> = None;
        let mut intervals = 0;
        let mut ok = true;
        let res = run_agent_observed(AgentKind::Ttaql, &agent, &env, env.change_point, &mut rng, |_, phase, q| {
            match (phase, &entered) {
                (Phase::Suspect, None) => entered = Some(q.values().to_vec()),
                (Phase::Suspect, Some(v)) => ok &= v.as_slice() == q.values(),
                (_, Some(v)) => {
                    // leaving by detection re-initialises the table
                    ok &= phase == Phase::Relearning || v.as_slice() == q.values();
                    entered = None;
                    intervals += 1;
                }
                _ => {}
            }
        }).unwrap();
        prop_assert!(ok);
        prop_assert_eq!(intervals > 0, res.suspect_steps() > 0);
        prop_assert_eq!(res.phases.len(), cfg.horizon);
        let first_relearn = res.phases.iter().position(|p| *p == Phase::Relearning).unwrap_or(cfg.horizon);
        prop_assert_eq!(first_relearn, res.detection.map_or(cfg.horizon, |d| d + 1));
        prop_assert!(res.phases[first_relearn..].iter().all(|p| *p == Phase::Relearning));
        prop_assert!(res.phases[..cfg.delta].iter().all(|p| *p == Phase::Learning));
    }

    #[test]
    fn equal_thresholds_reduce_ttaql_to_staql(seed in any::<u64>(), level in 3.0..9.0f64) {
        let cfg = ExperimentConfig { threshold_a: level, threshold_b: level, threshold_a_tilde: level, ..ExperimentConfig::default() };
        let env = cfg.process().unwrap();
        let agent = cfg.agent_config().unwrap();
        let two = run_agent(AgentKind::Ttaql, &agent, &env, env.change_point, &mut RngStream::for_run(seed, 1)).unwrap();
        let one = run_agent(AgentKind::Staql, &agent, &env, env.change_point, &mut RngStream::for_run(seed, 1)).unwrap();
        prop_assert_eq!(&two.rewards, &one.rewards);
        prop_assert_eq!(two.detection, one.detection);
        prop_assert_eq!(two.suspect_steps(), 0);
    }
}
