use countmorl_core::dataset::generate_dataset;
use countmorl_core::mdp::enumerate_deterministic_policies;
use countmorl_core::synthetic::random_mdp;
use countmorl_core::{
    build_conservative_mdp, discounted_visitation, error_bound, exact_counts, fit_ensemble, fit_mle,
    policy_evaluation, scalar_return, total_variation, tv_errors, value_iteration, CountMode, ErrorBoundConfig,
    KnownEnv, PenaltySpec, PolicyTable, TabularMdp,
};

/// `sum_{t<T} gamma^t P_pi^t r_pi` with `T` large enough for the given tail.
fn truncated_values(mdp: &TabularMdp, pi: &PolicyTable, horizon: usize) -> Vec<f64> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut v = vec![0.0; ns];
    let mut dist: Vec<Vec<f64>> = (0..ns).map(|s| (0..ns).map(|x| (x == s) as u8 as f64).collect()).collect();
    let mut disc = 1.0;
    for _ in 0..horizon {
        for s in 0..ns {
            let mut next = vec![0.0; ns];
            for (x, &mass) in dist[s].iter().enumerate() {
                if mass == 0.0 {
                    continue;
                }
                for a in 0..na {
                    let w = mass * pi.prob(x, a);
                    v[s] += disc * w * mdp.reward(x, a);
                    for (y, p) in mdp.row(x, a).iter().enumerate() {
                        next[y] += w * p;
                    }
                }
            }
            dist[s] = next;
        }
        disc *= mdp.gamma();
    }
    v
}

fn horizon_for(gamma: f64, r_max: f64, tail: f64) -> usize {
    // 2 * gamma^T * r_max / (1 - gamma) < tail
    ((tail * (1.0 - gamma) / (2.0 * r_max)).ln() / gamma.ln()).ceil() as usize + 1
}

#[test]
fn policy_evaluation_matches_truncated_sum() {
    let mdp = random_mdp(4, 2, 0.9, 11).unwrap();
    let pi = PolicyTable::new(vec![vec![0.3, 0.7], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap();
    let t = horizon_for(0.9, mdp.r_max(), 1e-6);
    let oracle = truncated_values(&mdp, &pi, t);
    let v = policy_evaluation(&mdp, &pi, 1e-10).unwrap();
    let bound = 2.0 * 0.9f64.powi(t as i32) * mdp.r_max() / 0.1;
    assert!(bound < 1e-6);
    for (a, b) in v.values().iter().zip(&oracle) {
        assert!((a - b).abs() <= bound + 1e-10, "{a} vs {b}");
    }
}

#[test]
fn visitation_matches_power_series() {
    let mdp = random_mdp(4, 2, 0.8, 12).unwrap();
    let pi = PolicyTable::new(vec![vec![0.2, 0.8], vec![0.6, 0.4], vec![1.0, 0.0], vec![0.5, 0.5]]).unwrap();
    let (ns, na) = (4, 2);
    let mut state = mdp.initial_dist().to_vec();
    let mut oracle = vec![0.0; ns * na];
    let mut disc = 1.0 - mdp.gamma();
    for _ in 0..200 {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let w = state[s] * pi.prob(s, a);
                oracle[s * na + a] += disc * w;
                for (y, p) in mdp.row(s, a).iter().enumerate() {
                    next[y] += w * p;
                }
            }
        }
        state = next;
        disc *= mdp.gamma();
    }
    let d = discounted_visitation(&mdp, &pi, 1e-12).unwrap();
    let l1: f64 = d.probs().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).sum();
    assert!(l1 < 1e-6, "L1 {l1}");
    assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-8);
    let marginal = d.state_marginal();
    for (s, m) in marginal.iter().enumerate() {
        assert!((m - (d.prob(s, 0) + d.prob(s, 1))).abs() < 1e-12);
    }
}

#[test]
fn scalar_return_identities() {
    let mdp = random_mdp(5, 3, 0.95, 13).unwrap();
    let pi = PolicyTable::uniform(5, 3);
    let tol = 1e-9;
    let direct = scalar_return(&mdp, &pi, tol).unwrap();
    let d = discounted_visitation(&mdp, &pi, tol).unwrap();
    let via_visitation = d.expect(mdp.rewards()) / (1.0 - mdp.gamma());
    assert!((direct - via_visitation).abs() <= 2.0 * tol + 1e-9);
}

#[test]
fn value_iteration_matches_enumeration() {
    for seed in 0..5 {
        let mdp = random_mdp(3, 2, 0.9, 100 + seed).unwrap();
        let tol = 1e-9;
        let (v_star, pi_star) = value_iteration(&mdp, tol).unwrap();
        let policies = enumerate_deterministic_policies(3, 2);
        assert_eq!(policies.len(), 8);
        let mut best = f64::NEG_INFINITY;
        for pi in &policies {
            let v = policy_evaluation(&mdp, pi, tol).unwrap();
            for s in 0..3 {
                assert!(v_star.values()[s] >= v.values()[s] - 2.0 * tol);
            }
            best = best.max(scalar_return(&mdp, pi, tol).unwrap());
        }
        assert!((scalar_return(&mdp, &pi_star, tol).unwrap() - best).abs() < 4.0 * tol);
    }
}

#[test]
fn conditional_pessimism_on_three_states() {
    let mdp = random_mdp(3, 2, 0.9, 21).unwrap();
    let env = KnownEnv::from_mdp(&mdp);
    let bound = ErrorBoundConfig::new(0.1, ErrorBoundConfig::default_log_model_class(3, 1.0)).unwrap();
    let spec = PenaltySpec::theory(bound, CountMode::Avg, 0.0).unwrap();
    let mut checked = 0;
    for rep in 0..30u64 {
        let data = generate_dataset(&mdp, &PolicyTable::uniform(3, 2), 40 + 10 * rep as usize, rep, 20).unwrap();
        let counts = exact_counts(&data);
        let ens = fit_ensemble(&data, 1, 0, true).unwrap();
        let cmdp = build_conservative_mdp(&ens, &counts, &env, &spec).unwrap();
        let event = (0..3).all(|s| {
            (0..2).all(|a| {
                total_variation(cmdp.base.row(s, a), mdp.row(s, a)).unwrap() <= error_bound(counts.get(s, a) as f64, &bound)
            })
        });
        if !event {
            continue;
        }
        checked += 1;
        for pi in enumerate_deterministic_policies(3, 2) {
            let tilde = scalar_return(&cmdp.base, &pi, 1e-11).unwrap();
            let truth = scalar_return(&mdp, &pi, 1e-11).unwrap();
            assert!(tilde <= truth + 1e-6, "rep {rep}: {tilde} > {truth}");
        }
    }
    assert!(checked > 0);
}

#[test]
fn mle_rows_and_tv() {
    // Exhaustive data from a deterministic MDP: every observed TV is zero.
    let mut rows = Vec::new();
    for s in 0..3 {
        rows.push((0..2).map(|a| (0..3).map(|x| ((s + a + 1) % 3 == x) as u8 as f64).collect()).collect());
    }
    let mdp = TabularMdp::new(rows, vec![vec![0.5; 2]; 3], 1.0, 0.9, vec![1.0, 0.0, 0.0]).unwrap();
    let data = generate_dataset(&mdp, &PolicyTable::uniform(3, 2), 500, 1, 50).unwrap();
    let model = fit_mle(&data);
    let tv = tv_errors(&model, &mdp).unwrap();
    for (i, t) in tv.iter().enumerate() {
        assert_eq!(model.is_observed(i / 2, i % 2), exact_counts(&data).counts()[i] > 0);
        if model.is_observed(i / 2, i % 2) {
            assert_eq!(*t, 0.0);
        } else {
            assert_eq!(*t, 1.0);
        }
    }
}

#[test]
fn heavily_sampled_rows_converge() {
    let mdp = random_mdp(4, 2, 0.9, 5).unwrap();
    let data = generate_dataset(&mdp, &PolicyTable::uniform(4, 2), 40_000, 9, 100).unwrap();
    let counts = exact_counts(&data);
    let tv = tv_errors(&fit_mle(&data), &mdp).unwrap();
    let mut checked = 0;
    for (i, &n) in counts.counts().iter().enumerate() {
        if n >= 2000 {
            checked += 1;
            assert!(tv[i] < 0.05, "pair {i}: n={n} tv={}", tv[i]);
        }
    }
    assert!(checked > 0);
}

#[test]
fn ensemble_disagreement_shrinks_with_data() {
    let mdp = random_mdp(4, 2, 0.9, 6).unwrap();
    let mut prev = f64::INFINITY;
    for n in [200, 2_000, 20_000] {
        let mean: f64 = (0..5u64)
            .map(|seed| {
                let data = generate_dataset(&mdp, &PolicyTable::uniform(4, 2), n, seed, 50).unwrap();
                fit_ensemble(&data, 5, seed, false).unwrap().mean_pairwise_tv()
            })
            .sum::<f64>()
            / 5.0;
        assert!(mean < prev, "n={n}: {mean} !< {prev}");
        prev = mean;
    }
}
