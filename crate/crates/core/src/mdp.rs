//! Exact finite-MDP machinery: policy evaluation, value iteration,
//! discounted visitation and total variation.
//!
//! Everything here is dense and synchronous. The solvers iterate the
//! relevant Bellman operator until the sup-norm increment certifies the
//! requested distance to the fixed point through the contraction factor
//! `gamma`, so tolerances are guarantees rather than heuristics.

use crate::error::{Error, Result};

/// Slack allowed on probability rows and distributions.
pub const SIMPLEX_TOL: f64 = 1e-9;

pub(crate) fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    let mut sum = 0.0;
    for (i, &x) in p.iter().enumerate() {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::invalid(format!("{what}: entry {i} = {x} is not a probability")));
        }
        sum += x;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::invalid(format!("{what}: sums to {sum}, expected 1")));
    }
    Ok(())
}

/// A finite discounted MDP `(S, A, P, r, d0, gamma)` with dense tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// Flattened `[S][A][S]`.
    transition: Vec<f64>,
    /// Flattened `[S][A]`.
    reward: Vec<f64>,
    r_max: f64,
    gamma: f64,
    initial_dist: Vec<f64>,
}

impl TabularMdp {
    /// Builds and validates an MDP. `transition` is indexed `[s][a][s']`.
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        r_max: f64,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let num_states = transition.len();
        if num_states == 0 {
            return Err(Error::invalid("MDP needs at least one state"));
        }
        let num_actions = transition[0].len();
        if num_actions == 0 {
            return Err(Error::invalid("MDP needs at least one action"));
        }
        let mut flat = Vec::with_capacity(num_states * num_actions * num_states);
        for (s, rows) in transition.iter().enumerate() {
            if rows.len() != num_actions {
                return Err(Error::dim(format!("state {s} has {} actions, expected {num_actions}", rows.len())));
            }
            for (a, row) in rows.iter().enumerate() {
                if row.len() != num_states {
                    return Err(Error::dim(format!("row ({s},{a}) has length {}, expected {num_states}", row.len())));
                }
                flat.extend_from_slice(row);
            }
        }
        if reward.len() != num_states || reward.iter().any(|r| r.len() != num_actions) {
            return Err(Error::dim("reward table must be [S][A]"));
        }
        let reward: Vec<f64> = reward.into_iter().flatten().collect();
        Self::from_flat(num_states, num_actions, flat, reward, r_max, gamma, initial_dist)
    }

    /// Builds from flattened `[S][A][S]` transitions and `[S][A]` rewards.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        r_max: f64,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("MDP needs at least one state and one action"));
        }
        if transition.len() != num_states * num_actions * num_states {
            return Err(Error::dim("transition table must be [S][A][S]"));
        }
        if reward.len() != num_states * num_actions {
            return Err(Error::dim("reward table must be [S][A]"));
        }
        if initial_dist.len() != num_states {
            return Err(Error::dim("initial distribution must have length S"));
        }
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::invalid(format!("r_max must be positive, got {r_max}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
        }
        let mdp = Self { num_states, num_actions, transition, reward, r_max, gamma, initial_dist };
        for s in 0..num_states {
            for a in 0..num_actions {
                check_simplex(mdp.row(s, a), &format!("transition row ({s},{a})"))?;
                let r = mdp.reward(s, a);
                if !r.is_finite() || r.abs() > r_max {
                    return Err(Error::invalid(format!("reward ({s},{a}) = {r} exceeds r_max = {r_max}")));
                }
            }
        }
        check_simplex(&mdp.initial_dist, "initial distribution")?;
        Ok(mdp)
    }

    /// Same dynamics and discount with a different reward table. The
    /// reward bound is widened to the actual range when needed, since a
    /// penalized reward may drop below `-r_max`.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        let observed = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            reward,
            self.r_max.max(observed),
            self.gamma,
            self.initial_dist.clone(),
        )
    }

    /// Same rewards and discount, different transition table.
    pub fn with_transition(&self, transition: Vec<f64>) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            transition,
            self.reward.clone(),
            self.r_max,
            self.gamma,
            self.initial_dist.clone(),
        )
    }

    pub fn with_initial_dist(&self, initial_dist: Vec<f64>) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.reward.clone(),
            self.r_max,
            self.gamma,
            initial_dist,
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Next-state distribution `P(.|s,a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transition
    }

    /// Largest absolute reward actually present.
    pub fn reward_range(&self) -> f64 {
        self.reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// `r(s,a) + gamma * sum_s' P(s'|s,a) v(s')`.
    pub fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let row = self.row(s, a);
        let next: f64 = row.iter().zip(v).map(|(p, x)| p * x).sum();
        self.reward(s, a) + self.gamma * next
    }

    fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        if policy.num_states != self.num_states || policy.num_actions != self.num_actions {
            return Err(Error::dim(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.num_states, policy.num_actions, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }
}

/// Stochastic policy `pi(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        let num_states = probs.len();
        let num_actions = probs.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("policy must be non-empty"));
        }
        if probs.iter().any(|r| r.len() != num_actions) {
            return Err(Error::dim("ragged policy table"));
        }
        Self::from_flat(num_states, num_actions, probs.into_iter().flatten().collect())
    }

    pub fn from_flat(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::dim("policy table must be [S][A]"));
        }
        let p = Self { num_states, num_actions, probs };
        for s in 0..num_states {
            check_simplex(p.row(s), &format!("policy row {s}"))?;
        }
        Ok(p)
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let w = 1.0 / num_actions as f64;
        Self { num_states, num_actions, probs: vec![w; num_states * num_actions] }
    }

    /// One-hot rows from an action per state.
    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::dim(format!("action {a} out of range for state {s}")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(Self { num_states: actions.len(), num_actions, probs })
    }

    /// Mixes a deterministic choice with uniform exploration:
    /// `(1 - eps) * onehot(greedy) + eps / A`.
    pub fn epsilon_greedy(actions: &[usize], num_actions: usize, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        let mut p = Self::deterministic(actions, num_actions)?;
        let floor = epsilon / num_actions as f64;
        for x in &mut p.probs {
            *x = (1.0 - epsilon) * *x + floor;
        }
        Ok(p)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Most probable action, lowest index on ties.
    pub fn mode_action(&self, s: usize) -> usize {
        argmax(self.row(s))
    }

    pub fn is_deterministic(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }
}

/// Index of the maximum, lowest index on exact ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// State values of a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Normalized discounted state-action occupancy `d^pi(s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationDist {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl VisitationDist {
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.probs.chunks(self.num_actions).map(|r| r.iter().sum()).collect()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// `E_{(s,a) ~ d}[f(s,a)]` for an `[S][A]` table.
    pub fn expect(&self, table: &[f64]) -> f64 {
        self.probs.iter().zip(table).map(|(p, x)| p * x).sum()
    }
}

fn policy_reward_and_kernel(mdp: &TabularMdp, policy: &PolicyTable) -> (Vec<f64>, Vec<f64>) {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut r_pi = vec![0.0; ns];
    let mut p_pi = vec![0.0; ns * ns];
    for s in 0..ns {
        for a in 0..na {
            let w = policy.prob(s, a);
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * mdp.reward(s, a);
            let row = mdp.row(s, a);
            let dst = &mut p_pi[s * ns..(s + 1) * ns];
            for (d, p) in dst.iter_mut().zip(row) {
                *d += w * p;
            }
        }
    }
    (r_pi, p_pi)
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Iterative evaluation of `V^pi`, returned within `tol` of the exact
/// fixed point in sup-norm.
pub fn policy_evaluation(mdp: &TabularMdp, policy: &PolicyTable, tol: f64) -> Result<ValueVector> {
    mdp.check_policy(policy)?;
    check_tol(tol)?;
    let ns = mdp.num_states;
    let gamma = mdp.gamma;
    let (r_pi, p_pi) = policy_reward_and_kernel(mdp, policy);
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    loop {
        for s in 0..ns {
            let row = &p_pi[s * ns..(s + 1) * ns];
            next[s] = r_pi[s] + gamma * row.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
        }
        let delta = sup_diff(&next, &v);
        std::mem::swap(&mut v, &mut next);
        // ||V_{k+1} - V^pi|| <= gamma/(1-gamma) * ||V_{k+1} - V_k||
        if gamma * delta <= tol * (1.0 - gamma) {
            break;
        }
    }
    Ok(ValueVector(v))
}

/// Optimal values and a greedy one-hot policy (lowest action on ties).
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<(ValueVector, PolicyTable)> {
    check_tol(tol)?;
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let gamma = mdp.gamma;
    let mut v = vec![0.0; ns];
    let mut next = vec![0.0; ns];
    loop {
        for (s, out) in next.iter_mut().enumerate() {
            *out = (0..na).map(|a| mdp.q_value(s, a, &v)).fold(f64::NEG_INFINITY, f64::max);
        }
        let delta = sup_diff(&next, &v);
        std::mem::swap(&mut v, &mut next);
        if gamma * delta <= tol * (1.0 - gamma) {
            break;
        }
    }
    let policy = greedy_policy(mdp, &v);
    Ok((ValueVector(v), policy))
}

/// One-hot policy greedy with respect to `v`.
pub fn greedy_policy(mdp: &TabularMdp, v: &[f64]) -> PolicyTable {
    let na = mdp.num_actions;
    let actions: Vec<usize> = (0..mdp.num_states)
        .map(|s| {
            let q: Vec<f64> = (0..na).map(|a| mdp.q_value(s, a, v)).collect();
            argmax(&q)
        })
        .collect();
    PolicyTable::deterministic(&actions, na).expect("argmax is in range")
}

/// `max_s |V(s) - (T_pi V)(s)|`.
pub fn bellman_residual(mdp: &TabularMdp, policy: &PolicyTable, v: &ValueVector) -> Result<f64> {
    mdp.check_policy(policy)?;
    if v.0.len() != mdp.num_states {
        return Err(Error::dim("value vector length differs from S"));
    }
    let mut worst = 0.0_f64;
    for s in 0..mdp.num_states {
        let backed: f64 = (0..mdp.num_actions).map(|a| policy.prob(s, a) * mdp.q_value(s, a, &v.0)).sum();
        worst = worst.max((backed - v.0[s]).abs());
    }
    Ok(worst)
}

/// `(1 - gamma) * sum_t gamma^t Pr(s_t = s) pi(a|s)`, within `tol` in L1.
///
/// Iterates `d <- (1 - gamma) d0 + gamma d P_pi`, which preserves total
/// mass exactly and contracts by `gamma` in L1.
pub fn discounted_visitation(mdp: &TabularMdp, policy: &PolicyTable, tol: f64) -> Result<VisitationDist> {
    mdp.check_policy(policy)?;
    check_tol(tol)?;
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let gamma = mdp.gamma;
    let (_, p_pi) = policy_reward_and_kernel(mdp, policy);
    let d0 = &mdp.initial_dist;
    let mut d = d0.clone();
    let mut next = vec![0.0; ns];
    loop {
        for (s, out) in next.iter_mut().enumerate() {
            *out = (1.0 - gamma) * d0[s];
        }
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            let row = &p_pi[s * ns..(s + 1) * ns];
            for (out, p) in next.iter_mut().zip(row) {
                *out += gamma * d[s] * p;
            }
        }
        let l1: f64 = next.iter().zip(&d).map(|(x, y)| (x - y).abs()).sum();
        std::mem::swap(&mut d, &mut next);
        if gamma * l1 <= tol * (1.0 - gamma) {
            break;
        }
    }
    let mut probs = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            probs[s * na + a] = d[s] * policy.prob(s, a);
        }
    }
    Ok(VisitationDist { num_states: ns, num_actions: na, probs })
}

/// `E_{s ~ d0}[V^pi(s)]`.
pub fn scalar_return(mdp: &TabularMdp, policy: &PolicyTable, tol: f64) -> Result<f64> {
    let v = policy_evaluation(mdp, policy, tol)?;
    Ok(mdp.initial_dist.iter().zip(&v.0).map(|(p, x)| p * x).sum())
}

/// Half the L1 distance between two distributions on the same support.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim(format!("length {} vs {}", p.len(), q.len())));
    }
    check_simplex(p, "p")?;
    check_simplex(q, "q")?;
    let half_l1 = 0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>();
    Ok(half_l1.min(1.0))
}

/// States where every action self-loops with probability one.
pub fn absorbing_states(mdp: &TabularMdp) -> Vec<bool> {
    (0..mdp.num_states)
        .map(|s| (0..mdp.num_actions).all(|a| mdp.row(s, a)[s] == 1.0))
        .collect()
}

/// Every deterministic policy, in lexicographic order of action vectors.
pub fn enumerate_deterministic_policies(num_states: usize, num_actions: usize) -> Vec<PolicyTable> {
    let total = (num_actions as u64).pow(num_states as u32) as usize;
    let mut out = Vec::with_capacity(total);
    let mut actions = vec![0usize; num_states];
    for mut code in 0..total {
        for slot in actions.iter_mut().rev() {
            *slot = code % num_actions;
            code /= num_actions;
        }
        out.push(PolicyTable::deterministic(&actions, num_actions).expect("in range"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(c: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![c]], c.abs().max(1.0), gamma, vec![1.0]).unwrap()
    }

    fn two_state() -> TabularMdp {
        TabularMdp::new(
            vec![
                vec![vec![0.5, 0.5], vec![1.0, 0.0]],
                vec![vec![0.0, 1.0], vec![0.25, 0.75]],
            ],
            vec![vec![1.0, 0.0], vec![0.5, -1.0]],
            1.0,
            0.8,
            vec![0.3, 0.7],
        )
        .unwrap()
    }

    #[test]
    fn geometric_series() {
        let mdp = single_state(2.0, 0.9);
        let v = policy_evaluation(&mdp, &PolicyTable::uniform(1, 1), 1e-12).unwrap();
        assert!((v.0[0] - 20.0).abs() < 1e-10);
    }

    #[test]
    fn zero_discount_is_immediate_reward() {
        let mdp = two_state();
        let mdp = TabularMdp::from_flat(2, 2, mdp.transitions().to_vec(), mdp.rewards().to_vec(), 1.0, 0.0, vec![0.5, 0.5])
            .unwrap();
        let pi = PolicyTable::new(vec![vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap();
        let v = policy_evaluation(&mdp, &pi, 1e-9).unwrap();
        assert!((v.0[0] - 0.25).abs() < 1e-12);
        assert!((v.0[1] - (-0.25)).abs() < 1e-12);
        let (_, greedy) = value_iteration(&mdp, 1e-9).unwrap();
        assert_eq!(greedy.mode_action(0), 0);
        assert_eq!(greedy.mode_action(1), 0);
        let d = discounted_visitation(&mdp, &pi, 1e-12).unwrap();
        assert!((d.prob(0, 1) - 0.5 * 0.75).abs() < 1e-12);
    }

    #[test]
    fn residual_contract() {
        let mdp = two_state();
        let pi = PolicyTable::new(vec![vec![0.4, 0.6], vec![0.9, 0.1]]).unwrap();
        let tol = 1e-6;
        let v = policy_evaluation(&mdp, &pi, tol).unwrap();
        let res = bellman_residual(&mdp, &pi, &v).unwrap();
        assert!(res <= tol * (1.0 - mdp.gamma()) / mdp.gamma());
    }

    #[test]
    fn dominant_action_everywhere() {
        let mdp = TabularMdp::new(
            vec![
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
                vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            ],
            vec![vec![0.0, 1.0], vec![-0.5, 0.5]],
            1.0,
            0.9,
            vec![1.0, 0.0],
        )
        .unwrap();
        let (_, pi) = value_iteration(&mdp, 1e-9).unwrap();
        assert_eq!(pi.mode_action(0), 1);
        assert_eq!(pi.mode_action(1), 1);
        assert!(pi.is_deterministic());
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let mdp = TabularMdp::new(vec![vec![vec![1.0], vec![1.0], vec![1.0]]], vec![vec![0.5, 0.5, 0.5]], 1.0, 0.5, vec![1.0])
            .unwrap();
        let (_, pi) = value_iteration(&mdp, 1e-9).unwrap();
        assert_eq!(pi.mode_action(0), 0);
    }

    #[test]
    fn absorbing_visitation() {
        let mdp = TabularMdp::new(
            vec![vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            1.0,
            0.9,
            vec![0.0, 1.0],
        )
        .unwrap();
        let pi = PolicyTable::new(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let d = discounted_visitation(&mdp, &pi, 1e-12).unwrap();
        assert!((d.prob(1, 0) - 0.2).abs() < 1e-12);
        assert!((d.prob(1, 1) - 0.8).abs() < 1e-12);
        assert_eq!(d.prob(0, 0), 0.0);
    }

    #[test]
    fn point_mass_start_picks_out_state_value() {
        let mdp = two_state().with_initial_dist(vec![0.0, 1.0]).unwrap();
        let pi = PolicyTable::uniform(2, 2);
        let v = policy_evaluation(&mdp, &pi, 1e-10).unwrap();
        let j = scalar_return(&mdp, &pi, 1e-10).unwrap();
        assert!((j - v.0[1]).abs() < 1e-12);
    }

    #[test]
    fn chain_with_unit_reward() {
        let mdp = TabularMdp::new(
            vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            vec![vec![1.0], vec![1.0]],
            1.0,
            0.95,
            vec![1.0, 0.0],
        )
        .unwrap();
        let j = scalar_return(&mdp, &PolicyTable::uniform(2, 1), 1e-10).unwrap();
        assert!((j - 20.0).abs() < 1e-9);
    }

    #[test]
    fn tv_examples() {
        assert_eq!(total_variation(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!((total_variation(&[0.5, 0.5], &[0.75, 0.25]).unwrap() - 0.25).abs() < 1e-15);
        assert!(total_variation(&[1.0], &[0.5, 0.5]).is_err());
        assert!(total_variation(&[0.7, 0.7], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TabularMdp::new(vec![vec![vec![0.5, 0.4], vec![1.0, 0.0]], vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]], 1.0, 0.9, vec![1.0, 0.0]).is_err());
        assert!(TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![2.0]], 1.0, 0.9, vec![1.0]).is_err());
        assert!(TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![0.0]], 1.0, 1.0, vec![1.0]).is_err());
        let mdp = two_state();
        assert!(policy_evaluation(&mdp, &PolicyTable::uniform(3, 2), 1e-6).is_err());
        assert!(policy_evaluation(&mdp, &PolicyTable::uniform(2, 2), 0.0).is_err());
    }

    #[test]
    fn enumeration_count() {
        let all = enumerate_deterministic_policies(3, 2);
        assert_eq!(all.len(), 8);
        assert!(all.iter().all(PolicyTable::is_deterministic));
        assert_ne!(all[0], all[7]);
    }
}
