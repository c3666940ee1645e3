//! Policy learning on the conservative model.
//!
//! [`exact_plan`] solves the penalized MDP by value iteration.
//! [`rollout_plan`] follows the model-rollout loop instead: short
//! branched rollouts from dataset states through randomly chosen
//! ensemble members, penalized on the fly and stored in a FIFO model
//! buffer, followed by tabular Q-learning on batches that mix real and
//! synthetic transitions.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;

use crate::conservative::{penalty, ConservativeMdp, KnownEnv, PenaltySpec};
use crate::counting::CountEstimator;
use crate::dataset::OfflineDataset;
use crate::error::{Error, Result};
use crate::mdp::{argmax, value_iteration, PolicyTable, ValueVector};
use crate::model::EnsembleModel;
use crate::sampling::{categorical, seeded};

/// Greedy policy and values of the conservative MDP.
pub fn exact_plan(cmdp: &ConservativeMdp, tol: f64) -> Result<(PolicyTable, ValueVector)> {
    let (v, pi) = value_iteration(&cmdp.base, tol)?;
    Ok((pi, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub epochs: usize,
    /// Rollouts started per epoch.
    pub rollout_batch: usize,
    /// Steps per rollout.
    pub horizon: usize,
    pub updates_per_epoch: usize,
    pub batch_size: usize,
    /// Fraction of each batch drawn from the real dataset.
    pub real_ratio: f64,
    pub q_learning_rate: f64,
    pub exploration_eps: f64,
    pub seed: u64,
    pub model_buffer_capacity: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            rollout_batch: 100,
            horizon: 5,
            updates_per_epoch: 20,
            batch_size: 256,
            real_ratio: 0.05,
            q_learning_rate: 0.1,
            exploration_eps: 0.2,
            seed: 0,
            model_buffer_capacity: 100_000,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.horizon == 0 || self.updates_per_epoch == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs, horizon, updates_per_epoch and batch_size must be positive"));
        }
        if self.model_buffer_capacity == 0 {
            return Err(Error::invalid("model_buffer_capacity must be positive"));
        }
        if !(0.0..=1.0).contains(&self.real_ratio) || !(0.0..=1.0).contains(&self.exploration_eps) {
            return Err(Error::invalid("real_ratio and exploration_eps must lie in [0, 1]"));
        }
        if !(self.q_learning_rate > 0.0 && self.q_learning_rate <= 1.0) {
            return Err(Error::invalid("q_learning_rate must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// A penalized transition produced by a model rollout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTransition {
    pub state: usize,
    pub action: usize,
    /// Reward before the penalty.
    pub model_reward: f64,
    pub nhat: f64,
    pub penalty: f64,
    /// `model_reward - penalty`.
    pub reward: f64,
    pub next_state: usize,
    /// Ensemble member that produced `next_state`.
    pub member: usize,
}

/// Bounded FIFO of synthetic transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBuffer {
    capacity: usize,
    items: VecDeque<SyntheticTransition>,
}

impl ModelBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, t: SyntheticTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&SyntheticTransition> {
        self.items.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &SyntheticTransition> {
        self.items.iter()
    }
}

#[derive(Debug, Clone)]
pub struct RolloutOutcome {
    pub policy: PolicyTable,
    pub q_table: Vec<f64>,
    pub buffer: ModelBuffer,
    pub real_samples: u64,
    pub model_samples: u64,
}

impl RolloutOutcome {
    pub fn real_fraction(&self) -> f64 {
        let total = self.real_samples + self.model_samples;
        if total == 0 {
            0.0
        } else {
            self.real_samples as f64 / total as f64
        }
    }
}

/// Rollout-based planning with tabular Q-learning.
///
/// Real transitions are penalized with the same spec when sampled, so
/// both data sources see penalized rewards. Rollouts stop early at
/// terminal states of `env`, whose value is taken as zero.
pub fn rollout_plan(
    ensemble: &EnsembleModel,
    counts: &dyn CountEstimator,
    data: &OfflineDataset,
    env: &KnownEnv,
    spec: &PenaltySpec,
    cfg: &RolloutConfig,
) -> Result<RolloutOutcome> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("rollout planning needs a non-empty dataset"));
    }
    let (ns, na) = (env.num_states, env.num_actions);
    if (ensemble.num_states(), ensemble.num_actions()) != (ns, na)
        || counts.dims() != (ns, na)
        || (data.num_states(), data.num_actions()) != (ns, na)
    {
        return Err(Error::dim("ensemble, counts, dataset and environment disagree on (S, A)"));
    }
    counts.check_mode(spec.count_mode, spec.alpha)?;

    let gamma = env.gamma;
    let penalize = |s: usize, a: usize, r: f64| -> (f64, f64, f64) {
        let nhat = counts.estimate(s, a, spec.count_mode, spec.alpha);
        if env.is_terminal(s) {
            return (r, 0.0, nhat);
        }
        let (rt, p) = penalty(r, nhat, spec, gamma, env.r_max);
        (rt, p, nhat)
    };

    let mut rng = seeded(cfg.seed);
    let mut q = vec![0.0; ns * na];
    let mut buffer = ModelBuffer::new(cfg.model_buffer_capacity);
    let (mut real_samples, mut model_samples) = (0u64, 0u64);
    let transitions = data.transitions();

    for _ in 0..cfg.epochs {
        for _ in 0..cfg.rollout_batch {
            let mut s = transitions[rng.random_range(0..transitions.len())].state;
            for _ in 0..cfg.horizon {
                if env.is_terminal(s) {
                    break;
                }
                let a = if rng.random::<f64>() < cfg.exploration_eps {
                    rng.random_range(0..na)
                } else {
                    argmax(&q[s * na..(s + 1) * na])
                };
                let member = rng.random_range(0..ensemble.n_members());
                let row = ensemble.members[member].completed_row(s, a);
                let next = categorical(&row, &mut rng);
                let r = env.reward(s, a);
                let (reward, pen, nhat) = penalize(s, a, r);
                buffer.push(SyntheticTransition {
                    state: s,
                    action: a,
                    model_reward: r,
                    nhat,
                    penalty: pen,
                    reward,
                    next_state: next,
                    member,
                });
                s = next;
            }
        }
        for _ in 0..cfg.updates_per_epoch {
            for _ in 0..cfg.batch_size {
                let use_real = buffer.is_empty() || rng.random::<f64>() < cfg.real_ratio;
                let (s, a, r, next) = if use_real {
                    real_samples += 1;
                    let t = transitions[rng.random_range(0..transitions.len())];
                    (t.state, t.action, penalize(t.state, t.action, t.reward).0, t.next_state)
                } else {
                    model_samples += 1;
                    let t = buffer.get(rng.random_range(0..buffer.len())).expect("index in range");
                    (t.state, t.action, t.reward, t.next_state)
                };
                let bootstrap = if env.is_terminal(next) {
                    0.0
                } else {
                    q[next * na..(next + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
                let i = s * na + a;
                q[i] += cfg.q_learning_rate * (r + gamma * bootstrap - q[i]);
            }
        }
    }

    let actions: Vec<usize> = (0..ns).map(|s| argmax(&q[s * na..(s + 1) * na])).collect();
    let policy = PolicyTable::deterministic(&actions, na)?;
    Ok(RolloutOutcome { policy, q_table: q, buffer, real_samples, model_samples })
}

/// `s,a,prob` rows.
pub fn policy_to_csv(policy: &PolicyTable) -> String {
    let mut out = String::from("s,a,prob\n");
    for s in 0..policy.num_states() {
        for a in 0..policy.num_actions() {
            let _ = writeln!(out, "{s},{a},{:?}", policy.prob(s, a));
        }
    }
    out
}
