use countmorl_core::dataset::generate_dataset;
use countmorl_core::gridworld::GridKind;
use countmorl_core::mdp::{absorbing_states, enumerate_deterministic_policies};
use countmorl_core::synthetic::random_mdp;
use countmorl_core::{
    build_conservative_mdp, build_gridworld, exact_counts, exact_plan, fit_ensemble, rollout_plan, scalar_return,
    train_behavior, value_iteration, BehaviorTrainConfig, CountEnsemble, CountMode, DatasetMeta, ErrorBoundConfig,
    FeatureKind, GridLayout, KnownEnv, OfflineDataset, PenaltySpec, PolicyTable, RolloutConfig, TabularMdp, Transition,
};

fn random_setup(seed: u64, n: usize) -> (TabularMdp, OfflineDataset) {
    let mdp = random_mdp(4, 2, 0.9, seed).unwrap();
    let data = generate_dataset(&mdp, &PolicyTable::uniform(4, 2), n, seed + 1, 30).unwrap();
    (mdp, data)
}

#[test]
fn beta_monotonicity() {
    let (mdp, data) = random_setup(1, 150);
    let ens = fit_ensemble(&data, 3, 2, true).unwrap();
    let mut counts = CountEnsemble::new(4, 2, FeatureKind::OneHot, 20, 3, 0.5, 3).unwrap();
    counts.ingest_dataset(&data).unwrap();
    let env = KnownEnv::from_mdp(&mdp);
    let policies = enumerate_deterministic_policies(4, 2);
    let mut prev: Option<Vec<f64>> = None;
    for beta in [0.0, 0.5, 1.0, 3.0, 5.0] {
        let spec = PenaltySpec::practical(beta, CountMode::Avg, 0.5).unwrap();
        let cmdp = build_conservative_mdp(&ens, &counts, &env, &spec).unwrap();
        let values: Vec<f64> = policies.iter().map(|pi| scalar_return(&cmdp.base, pi, 1e-10).unwrap()).collect();
        if let Some(p) = &prev {
            for (now, before) in values.iter().zip(p) {
                assert!(*now <= before + 1e-9);
            }
        }
        prev = Some(values);
    }
}

#[test]
fn mode_dominance_of_penalties() {
    let (mdp, data) = random_setup(2, 300);
    let ens = fit_ensemble(&data, 3, 2, true).unwrap();
    let mut counts = CountEnsemble::new(4, 2, FeatureKind::NoisyOneHot { rho: 0.5 }, 6, 4, 0.5, 3).unwrap();
    counts.ingest_dataset(&data).unwrap();
    let env = KnownEnv::from_mdp(&mdp);
    for spec_of in [
        |m| PenaltySpec::practical(1.0, m, 0.5).unwrap(),
        |m| PenaltySpec::theory(ErrorBoundConfig::new(0.1, 3.0).unwrap(), m, 0.5).unwrap(),
    ] {
        let [lc, avg, uc] = CountMode::ALL.map(|m| build_conservative_mdp(&ens, &counts, &env, &spec_of(m)).unwrap());
        for i in 0..8 {
            assert!(lc.penalty_table[i] >= avg.penalty_table[i]);
            assert!(avg.penalty_table[i] >= uc.penalty_table[i]);
        }
    }
}

#[test]
fn unpenalized_exhaustive_plan_matches_mle_value_iteration() {
    let (mdp, data) = random_setup(3, 5000);
    assert!(exact_counts(&data).zero_pairs().is_empty());
    let ens = fit_ensemble(&data, 1, 0, true).unwrap();
    let spec = PenaltySpec::practical(0.0, CountMode::Avg, 0.0).unwrap();
    let cmdp = build_conservative_mdp(&ens, &exact_counts(&data), &KnownEnv::from_mdp(&mdp), &spec).unwrap();
    let mle = ens.members[0].to_mdp(&mdp).unwrap();
    let (pi, v) = exact_plan(&cmdp, 1e-10).unwrap();
    let (v_mle, pi_mle) = value_iteration(&mle, 1e-10).unwrap();
    assert_eq!(pi, pi_mle);
    for (a, b) in v.values().iter().zip(v_mle.values()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn large_beta_avoids_unobserved_action() {
    // State 0: action 0 observed (stay, reward 0.5), action 1 never observed
    // but with a higher true reward. A large beta must steer away from it.
    let rows = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]];
    let mdp = TabularMdp::new(rows, vec![vec![0.5, 0.9], vec![0.1, 0.1]], 1.0, 0.9, vec![1.0, 0.0]).unwrap();
    let ts = (0..20).map(|_| Transition { state: 0, action: 0, reward: 0.5, next_state: 0 }).collect();
    let data = OfflineDataset::new(2, 2, ts, DatasetMeta::default()).unwrap();
    let ens = fit_ensemble(&data, 1, 0, true).unwrap();
    let env = KnownEnv::from_mdp(&mdp);
    let spec = PenaltySpec::practical(100.0, CountMode::Avg, 0.0).unwrap();
    let cmdp = build_conservative_mdp(&ens, &exact_counts(&data), &env, &spec).unwrap();
    let (pi, _) = exact_plan(&cmdp, 1e-10).unwrap();
    assert_eq!(pi.mode_action(0), 0);
    let best = enumerate_deterministic_policies(2, 2)
        .into_iter()
        .max_by(|a, b| {
            let va = scalar_return(&cmdp.base, a, 1e-10).unwrap();
            let vb = scalar_return(&cmdp.base, b, 1e-10).unwrap();
            va.total_cmp(&vb)
        })
        .unwrap();
    assert_eq!(best.mode_action(0), 0);
}

#[test]
fn rollout_plan_agrees_with_exact_plan() {
    let mdp = random_mdp(4, 2, 0.8, 40).unwrap();
    let data = generate_dataset(&mdp, &PolicyTable::uniform(4, 2), 4000, 41, 30).unwrap();
    let counts = exact_counts(&data);
    let ens = fit_ensemble(&data, 1, 0, true).unwrap();
    let env = KnownEnv::from_mdp(&mdp);
    let spec = PenaltySpec::practical(0.5, CountMode::Avg, 0.0).unwrap();
    let (exact, _) = exact_plan(&build_conservative_mdp(&ens, &counts, &env, &spec).unwrap(), 1e-10).unwrap();
    let cfg = RolloutConfig {
        epochs: 200,
        rollout_batch: 50,
        horizon: 5,
        updates_per_epoch: 10,
        batch_size: 64,
        q_learning_rate: 0.05,
        exploration_eps: 0.5,
        seed: 8,
        ..Default::default()
    };
    let out = rollout_plan(&ens, &counts, &data, &env, &spec, &cfg).unwrap();
    for s in 0..4 {
        if (0..2).all(|a| counts.get(s, a) > 0) {
            assert_eq!(out.policy.mode_action(s), exact.mode_action(s), "state {s}: q {:?}", out.q_table);
        }
    }
}

#[test]
fn rollout_mixing_ratio() {
    let (mdp, data) = random_setup(5, 500);
    let counts = exact_counts(&data);
    let ens = fit_ensemble(&data, 3, 1, false).unwrap();
    let spec = PenaltySpec::practical(1.0, CountMode::Avg, 0.0).unwrap();
    let cfg = RolloutConfig { epochs: 20, real_ratio: 0.25, ..Default::default() };
    let out = rollout_plan(&ens, &counts, &data, &KnownEnv::from_mdp(&mdp), &spec, &cfg).unwrap();
    let total = (out.real_samples + out.model_samples) as f64;
    let sd = (0.25 * 0.75 / total).sqrt();
    assert!((out.real_fraction() - 0.25).abs() < 4.0 * sd);
    assert!(out.buffer.len() <= cfg.model_buffer_capacity);
}

#[test]
fn rollouts_stop_at_terminals_and_terminals_carry_no_penalty() {
    let layout = GridLayout::builtin(GridKind::Cliff);
    let mdp = build_gridworld(&layout).unwrap();
    let run = train_behavior(&mdp, &BehaviorTrainConfig { episodes: 300, seed: 1, ..Default::default() }).unwrap();
    let env = KnownEnv::from_mdp(&mdp).with_terminal(layout.terminal_mask());
    let ens = fit_ensemble(&run.dataset, 3, 1, true).unwrap();
    let counts = exact_counts(&run.dataset);
    let spec = PenaltySpec::practical(1.0, CountMode::Avg, 0.0).unwrap();
    let cfg = RolloutConfig { epochs: 5, horizon: 20, ..Default::default() };
    let out = rollout_plan(&ens, &counts, &run.dataset, &env, &spec, &cfg).unwrap();
    let terminal = layout.terminal_mask();
    assert!(out.buffer.iter().all(|t| !terminal[t.state]));
    let cmdp = build_conservative_mdp(&ens, &counts, &env, &spec).unwrap();
    for s in (0..64).filter(|&s| terminal[s]) {
        for a in 0..4 {
            assert_eq!(cmdp.penalty_at(s, a), 0.0);
        }
    }
}

#[test]
fn empty_grid_replay_covers_every_reachable_pair() {
    let layout = GridLayout::builtin(GridKind::Empty);
    let mdp = build_gridworld(&layout).unwrap();
    let cfg = BehaviorTrainConfig { min_transitions: 50_000, ..Default::default() };
    let run = train_behavior(&mdp, &cfg).unwrap();
    assert!(run.dataset.len() >= 50_000);
    let counts = exact_counts(&run.dataset);
    let absorbing = absorbing_states(&mdp);
    for (s, a) in counts.zero_pairs() {
        assert!(absorbing[s], "non-absorbing pair ({s},{a}) uncovered");
    }
    assert_eq!(counts.zero_pairs().len(), 4);
}

#[test]
fn hashed_counts_exact_on_grid_replay() {
    for kind in GridKind::ALL {
        let mdp = build_gridworld(&GridLayout::builtin(kind)).unwrap();
        let run = train_behavior(&mdp, &BehaviorTrainConfig { min_transitions: 20_000, seed: 2, ..Default::default() }).unwrap();
        let mut ens = CountEnsemble::new(64, 4, FeatureKind::OneHot, 20, 3, 0.5, 9).unwrap();
        ens.ingest_dataset(&run.dataset).unwrap();
        let exact = exact_counts(&run.dataset);
        let pairs: Vec<(usize, usize)> = (0..64).flat_map(|s| (0..4).map(move |a| (s, a))).collect();
        for i in 0..3 {
            if ens.is_injective_on(i, &pairs) {
                for &(s, a) in &pairs {
                    assert_eq!(ens.member_count(i, s, a).unwrap(), exact.get(s, a));
                }
            }
        }
    }
}
