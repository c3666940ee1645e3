//! The count-based conservative MDP: the estimated dynamics with every
//! reward lowered by a penalty that shrinks as the (approximate) count of
//! the pair grows.
//!
//! Two penalty forms are supported and never mixed:
//!
//! * `Theory`: `gamma * R_max / (1 - gamma) * C_hat(n_hat)`, with `C_hat`
//!   the clipped estimation-error bound of [`crate::model::error_bound`].
//! * `Practical`: `beta / sqrt(n_hat)` when `n_hat > 0`, else `beta`.
//!
//! States flagged terminal by a known termination mask keep their exact
//! zero-penalty self-loop; everything else unobserved becomes a
//! self-loop carrying the maximal penalty.

use std::fmt::Write as _;

use crate::counting::{CountEstimator, CountMode};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::model::{error_bound, self_loop, EnsembleModel, ErrorBoundConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PenaltyMode {
    Theory { bound: ErrorBoundConfig },
    Practical { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    pub mode: PenaltyMode,
    pub count_mode: CountMode,
    pub alpha: f64,
}

impl PenaltySpec {
    pub fn practical(beta: f64, count_mode: CountMode, alpha: f64) -> Result<Self> {
        let spec = Self { mode: PenaltyMode::Practical { beta }, count_mode, alpha };
        spec.validate()?;
        Ok(spec)
    }

    pub fn theory(bound: ErrorBoundConfig, count_mode: CountMode, alpha: f64) -> Result<Self> {
        let spec = Self { mode: PenaltyMode::Theory { bound }, count_mode, alpha };
        spec.validate()?;
        Ok(spec)
    }

    /// `beta = 0` is accepted as the unpenalized baseline.
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PenaltyMode::Practical { beta } if !(beta >= 0.0) || !beta.is_finite() => {
                return Err(Error::invalid(format!("beta must be non-negative, got {beta}")))
            }
            PenaltyMode::Theory { bound } => {
                ErrorBoundConfig::new(bound.delta, bound.log_model_class)?;
            }
            _ => {}
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Penalty applied at `n_hat <= 0`.
    pub fn max_penalty(&self, gamma: f64, r_max: f64) -> f64 {
        match self.mode {
            PenaltyMode::Practical { beta } => beta,
            PenaltyMode::Theory { .. } => gamma * r_max / (1.0 - gamma),
        }
    }

    pub fn label(&self) -> String {
        match self.mode {
            PenaltyMode::Practical { beta } => format!("practical(beta={beta})"),
            PenaltyMode::Theory { bound } => {
                format!("theory(delta={},log_model_class={})", bound.delta, bound.log_model_class)
            }
        }
    }
}

/// Returns `(r - penalty, penalty)`.
pub fn penalty(r: f64, n_hat: f64, spec: &PenaltySpec, gamma: f64, r_max: f64) -> (f64, f64) {
    let amount = match spec.mode {
        PenaltyMode::Practical { beta } => {
            if n_hat > 0.0 {
                beta / n_hat.sqrt()
            } else {
                beta
            }
        }
        PenaltyMode::Theory { bound } => gamma * r_max / (1.0 - gamma) * error_bound(n_hat, &bound),
    };
    (r - amount, amount)
}

/// What the learner knows about the environment besides the data: the
/// reward table, discount, reward bound, start distribution and
/// optionally which states terminate an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownEnv {
    pub num_states: usize,
    pub num_actions: usize,
    pub reward: Vec<f64>,
    pub gamma: f64,
    pub r_max: f64,
    pub initial_dist: Vec<f64>,
    pub terminal: Option<Vec<bool>>,
}

impl KnownEnv {
    /// Everything but the dynamics of `mdp`.
    pub fn from_mdp(mdp: &TabularMdp) -> Self {
        Self {
            num_states: mdp.num_states(),
            num_actions: mdp.num_actions(),
            reward: mdp.rewards().to_vec(),
            gamma: mdp.gamma(),
            r_max: mdp.r_max(),
            initial_dist: mdp.initial_dist().to_vec(),
            terminal: None,
        }
    }

    pub fn with_terminal(mut self, terminal: Vec<bool>) -> Self {
        self.terminal = Some(terminal);
        self
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal.as_ref().is_some_and(|t| t[s])
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeMdp {
    /// Completed ensemble-mean dynamics with penalized rewards.
    pub base: TabularMdp,
    /// True reward per pair, `[S][A]`.
    pub reward: Vec<f64>,
    pub penalty_table: Vec<f64>,
    pub nhat_table: Vec<f64>,
    pub spec: PenaltySpec,
    /// Penalty at `n_hat <= 0` for this spec.
    pub max_penalty: f64,
}

impl ConservativeMdp {
    pub fn penalty_at(&self, s: usize, a: usize) -> f64 {
        self.penalty_table[s * self.base.num_actions() + a]
    }

    pub fn stats(&self) -> PenaltyStats {
        let n = self.penalty_table.len() as f64;
        let mean = self.penalty_table.iter().sum::<f64>() / n;
        let max = self.penalty_table.iter().copied().fold(0.0, f64::max);
        let at_max = self.penalty_table.iter().filter(|&&p| p > 0.0 && p >= self.max_penalty).count();
        PenaltyStats { mean, max, frac_at_max: at_max as f64 / n }
    }

    /// `s,a,r,nhat,penalty,rtilde`.
    pub fn audit_csv(&self) -> String {
        let na = self.base.num_actions();
        let mut out = String::from("s,a,r,nhat,penalty,rtilde\n");
        for s in 0..self.base.num_states() {
            for a in 0..na {
                let i = s * na + a;
                let _ = writeln!(
                    out,
                    "{s},{a},{:?},{:?},{:?},{:?}",
                    self.reward[i],
                    self.nhat_table[i],
                    self.penalty_table[i],
                    self.base.reward(s, a)
                );
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyStats {
    pub mean: f64,
    pub max: f64,
    pub frac_at_max: f64,
}

/// Builds the penalized MDP over the ensemble-mean dynamics.
pub fn build_conservative_mdp(
    ensemble: &EnsembleModel,
    counts: &dyn CountEstimator,
    env: &KnownEnv,
    spec: &PenaltySpec,
) -> Result<ConservativeMdp> {
    spec.validate()?;
    let (ns, na) = (env.num_states, env.num_actions);
    if (ensemble.num_states(), ensemble.num_actions()) != (ns, na) || counts.dims() != (ns, na) {
        return Err(Error::dim("ensemble, counts and environment disagree on (S, A)"));
    }
    if env.reward.len() != ns * na {
        return Err(Error::dim("reward table must be [S][A]"));
    }
    if env.terminal.as_ref().is_some_and(|t| t.len() != ns) {
        return Err(Error::dim("terminal mask must have length S"));
    }
    counts.check_mode(spec.count_mode, spec.alpha)?;
    let mut transition = Vec::with_capacity(ns * na * ns);
    let mut rtilde = vec![0.0; ns * na];
    let mut penalties = vec![0.0; ns * na];
    let mut nhat = vec![0.0; ns * na];
    for s in 0..ns {
        let terminal = env.is_terminal(s);
        for a in 0..na {
            let i = s * na + a;
            let r = env.reward[i];
            nhat[i] = counts.estimate(s, a, spec.count_mode, spec.alpha);
            if terminal {
                transition.extend(self_loop(ns, s));
                rtilde[i] = r;
                continue;
            }
            transition.extend(ensemble.mean_row(s, a).unwrap_or_else(|| self_loop(ns, s)));
            let (penalized, amount) = penalty(r, nhat[i], spec, env.gamma, env.r_max);
            rtilde[i] = penalized;
            penalties[i] = amount;
        }
    }
    let range = rtilde.iter().fold(env.r_max, |m, r| m.max(r.abs()));
    let base = TabularMdp::from_flat(ns, na, transition, rtilde, range, env.gamma, env.initial_dist.clone())?;
    Ok(ConservativeMdp {
        base,
        reward: env.reward.clone(),
        penalty_table: penalties,
        nhat_table: nhat,
        spec: *spec,
        max_penalty: spec.max_penalty(env.gamma, env.r_max),
    })
}
