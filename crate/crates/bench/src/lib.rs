//! Fixtures shared by the benchmarks.

use countmorl_core::dataset::generate_dataset;
use countmorl_core::synthetic::random_mdp;
use countmorl_core::{build_gridworld, train_behavior, BehaviorTrainConfig, GridKind, GridLayout, OfflineDataset, PolicyTable, TabularMdp};

pub fn random_fixture(num_states: usize, num_actions: usize, transitions: usize) -> (TabularMdp, OfflineDataset) {
    let mdp = random_mdp(num_states, num_actions, 0.9, 1).expect("valid sizes");
    let pi = PolicyTable::uniform(num_states, num_actions);
    let data = generate_dataset(&mdp, &pi, transitions, 2, 50).expect("valid policy");
    (mdp, data)
}

pub fn grid_fixture(kind: GridKind, transitions: usize) -> (TabularMdp, OfflineDataset) {
    let mdp = build_gridworld(&GridLayout::builtin(kind)).expect("builtin layout");
    let cfg = BehaviorTrainConfig { min_transitions: transitions, ..Default::default() };
    let run = train_behavior(&mdp, &cfg).expect("trainable layout");
    (mdp, run.dataset)
}
