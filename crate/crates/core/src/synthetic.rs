//! Seeded random MDPs for tests and theory checks.

use rand::Rng;

use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::sampling::seeded;

/// Random MDP with full-support transition rows, rewards uniform in
/// `[0, 1]`, `r_max = 1` and a uniform initial distribution.
///
/// Rewards are non-negative so that every value function lies in
/// `[0, 1/(1-gamma)]`, the range the value-gap inequalities assume.
pub fn random_mdp(num_states: usize, num_actions: usize, gamma: f64, seed: u64) -> Result<TabularMdp> {
    let mut rng = seeded(seed);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        // Exponential weights give a flat Dirichlet row.
        let w: Vec<f64> = (0..num_states).map(|_| -(1.0 - rng.random::<f64>()).ln() + 1e-3).collect();
        let z: f64 = w.iter().sum();
        transition.extend(w.iter().map(|x| x / z));
    }
    let reward = (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect();
    let d0 = vec![1.0 / num_states as f64; num_states];
    TabularMdp::from_flat(num_states, num_actions, transition, reward, 1.0, gamma, d0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_valid() {
        let a = random_mdp(5, 2, 0.9, 1).unwrap();
        let b = random_mdp(5, 2, 0.9, 1).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_mdp(5, 2, 0.9, 2).unwrap());
        assert!(a.rewards().iter().all(|&r| (0.0..=1.0).contains(&r)));
    }
}
