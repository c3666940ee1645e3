//! Experiment configuration, read from TOML.
//!
//! Every section and field has a default, so an empty file is a valid
//! config (a Bridge run with the mid-quality replay dataset).

use std::path::{Path, PathBuf};

use countmorl_core::gridworld::GridKind;
use countmorl_core::{CountMode, ErrorBoundConfig, PenaltySpec, RolloutConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Stage, StageError};

/// Code widths offered by the sweep presets.
pub const CODE_BITS_CHOICES: [usize; 5] = [16, 32, 50, 64, 80];
pub const BETA_CHOICES: [f64; 4] = [0.5, 1.0, 3.0, 5.0];
pub const HORIZON_CHOICES: [usize; 2] = [5, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `grid/<empty|bridge|cliff|zigzag>` or `random/<S>x<A>`.
    pub env_id: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub dataset: DatasetConfig,
    pub ensemble: EnsembleConfig,
    pub counting: CountingConfig,
    pub penalty: PenaltyConfig,
    pub planner: PlannerConfig,
    pub eval: EvalConfig,
    pub theory: TheoryConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            env_id: "grid/bridge".into(),
            seed: 0,
            output_dir: PathBuf::from("out"),
            dataset: DatasetConfig::default(),
            ensemble: EnsembleConfig::default(),
            counting: CountingConfig::default(),
            penalty: PenaltyConfig::default(),
            planner: PlannerConfig::default(),
            eval: EvalConfig::default(),
            theory: TheoryConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// Replay buffer of the Q-learning behavior agent.
    Replay,
    /// Rollouts of an epsilon-greedy policy around a trained Q-table.
    Policy,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub source: DatasetSource,
    pub path: Option<PathBuf>,
    /// `policy`: exact size. `replay`: minimum size.
    pub transitions: usize,
    pub train_episodes: usize,
    pub train_epsilon: f64,
    pub learning_rate: f64,
    pub max_episode_steps: usize,
    /// Exploration of the data-collecting policy for `policy` datasets.
    pub behavior_epsilon: f64,
    /// Discount of `random/...` environments.
    pub gamma: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            source: DatasetSource::Replay,
            path: None,
            transitions: 30_000,
            train_episodes: 1000,
            train_epsilon: 0.3,
            learning_rate: 0.5,
            max_episode_steps: 100,
            behavior_epsilon: 0.3,
            gamma: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub members: usize,
    /// Member 0 is the plain MLE instead of a bootstrap resample.
    pub include_plain: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { members: 5, include_plain: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMethod {
    Hash,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureChoice {
    OneHot,
    NoisyOneHot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountingConfig {
    pub method: CountMethod,
    pub features: FeatureChoice,
    pub rho: f64,
    pub code_bits: usize,
    pub members: usize,
    pub alpha: f64,
    pub mode: String,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self {
            method: CountMethod::Hash,
            features: FeatureChoice::OneHot,
            rho: 0.05,
            code_bits: 32,
            members: 5,
            alpha: 0.5,
            mode: "avg".into(),
        }
    }
}

impl CountingConfig {
    pub fn count_mode(&self) -> Result<CountMode, StageError> {
        self.mode.parse().map_err(|e: countmorl_core::Error| StageError::new(Stage::Config, e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    Practical,
    Theory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub beta: f64,
    pub delta: f64,
    /// Defaults to `2 + S ln S` when absent.
    pub log_model_class: Option<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self { kind: PenaltyKind::Practical, beta: 1.0, delta: 0.1, log_model_class: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Exact,
    Rollout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub kind: PlannerKind,
    pub epochs: usize,
    pub rollout_batch: usize,
    pub horizon: usize,
    pub updates_per_epoch: usize,
    pub batch_size: usize,
    pub real_ratio: f64,
    pub q_learning_rate: f64,
    pub exploration_eps: f64,
    pub model_buffer_capacity: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let r = RolloutConfig::default();
        Self {
            kind: PlannerKind::Exact,
            epochs: r.epochs,
            rollout_batch: r.rollout_batch,
            horizon: r.horizon,
            updates_per_epoch: r.updates_per_epoch,
            batch_size: r.batch_size,
            real_ratio: r.real_ratio,
            q_learning_rate: r.q_learning_rate,
            exploration_eps: r.exploration_eps,
            model_buffer_capacity: r.model_buffer_capacity,
        }
    }
}

impl PlannerConfig {
    pub fn rollout(&self, seed: u64) -> RolloutConfig {
        RolloutConfig {
            epochs: self.epochs,
            rollout_batch: self.rollout_batch,
            horizon: self.horizon,
            updates_per_epoch: self.updates_per_epoch,
            batch_size: self.batch_size,
            real_ratio: self.real_ratio,
            q_learning_rate: self.q_learning_rate,
            exploration_eps: self.exploration_eps,
            seed,
            model_buffer_capacity: self.model_buffer_capacity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub num_seeds: usize,
    pub tol: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { num_seeds: 5, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    /// Size of the enumerable MDP used for the inequality checks.
    pub num_states: usize,
    pub num_actions: usize,
    pub gamma: f64,
    pub mdp_seed: u64,
    /// Repetitions used for the inequality checks and for coverage.
    pub reps: usize,
    /// Independent repetitions used to calibrate `log_model_class`.
    pub calib_reps: usize,
    pub min_transitions: usize,
    pub max_transitions: usize,
    pub delta: f64,
    /// Dataset draws for the TV-vs-count regression.
    pub tv_draws: usize,
    pub tv_num_states: usize,
    pub tv_num_actions: usize,
    pub tv_min_transitions: usize,
    pub tv_max_transitions: usize,
    pub tol: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            num_states: 3,
            num_actions: 2,
            gamma: 0.9,
            mdp_seed: 7,
            reps: 200,
            calib_reps: 200,
            min_transitions: 30,
            max_transitions: 300,
            delta: 0.1,
            tv_draws: 60,
            tv_num_states: 5,
            tv_num_actions: 2,
            tv_min_transitions: 100,
            tv_max_transitions: 100_000,
            tol: 1e-6,
        }
    }
}

/// Grid axes. An absent axis uses the base config value; an explicitly
/// empty axis is an error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub modes: Option<Vec<String>>,
    pub betas: Option<Vec<f64>>,
    pub horizons: Option<Vec<usize>>,
    pub code_bits: Option<Vec<usize>>,
    pub alphas: Option<Vec<f64>>,
}

/// A parsed environment id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvSpec {
    Grid(GridKind),
    Random { num_states: usize, num_actions: usize },
}

impl EnvSpec {
    pub fn parse(id: &str) -> Result<Self, StageError> {
        let bad = || StageError::new(Stage::Config, format!("invalid env_id '{id}'"));
        match id.split_once('/') {
            Some(("grid", name)) => name.parse().map(EnvSpec::Grid).map_err(|_| bad()),
            Some(("random", dims)) => {
                let (s, a) = dims.split_once('x').ok_or_else(bad)?;
                let num_states: usize = s.parse().map_err(|_| bad())?;
                let num_actions: usize = a.parse().map_err(|_| bad())?;
                if num_states == 0 || num_actions == 0 {
                    return Err(bad());
                }
                Ok(EnvSpec::Random { num_states, num_actions })
            }
            _ => Err(bad()),
        }
    }
}

fn config_err(msg: impl Into<String>) -> StageError {
    StageError::new(Stage::Config, msg)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, StageError> {
        let cfg: Self = toml::from_str(text).map_err(|e| config_err(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    pub fn env(&self) -> Result<EnvSpec, StageError> {
        EnvSpec::parse(&self.env_id)
    }

    pub fn penalty_spec(&self) -> Result<PenaltySpec, StageError> {
        let mode = self.counting.count_mode()?;
        let spec = match self.penalty.kind {
            PenaltyKind::Practical => PenaltySpec::practical(self.penalty.beta, mode, self.counting.alpha),
            PenaltyKind::Theory => {
                let ns = match self.env()? {
                    EnvSpec::Grid(_) => countmorl_core::gridworld::GRID_SIZE * countmorl_core::gridworld::GRID_SIZE,
                    EnvSpec::Random { num_states, .. } => num_states,
                };
                let l = self.penalty.log_model_class.unwrap_or_else(|| ErrorBoundConfig::default_log_model_class(ns, 1.0));
                ErrorBoundConfig::new(self.penalty.delta, l).and_then(|b| PenaltySpec::theory(b, mode, self.counting.alpha))
            }
        };
        spec.map_err(|e| config_err(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let env = self.env()?;
        let d = &self.dataset;
        if d.source == DatasetSource::File {
            match &d.path {
                Some(p) if p.exists() => {}
                Some(p) => return Err(config_err(format!("dataset file {} does not exist", p.display()))),
                None => return Err(config_err("dataset.source = \"file\" needs dataset.path")),
            }
        }
        for (name, v) in [("train_epsilon", d.train_epsilon), ("behavior_epsilon", d.behavior_epsilon)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(config_err(format!("dataset.{name} must lie in [0, 1]")));
            }
        }
        if !(d.learning_rate > 0.0 && d.learning_rate <= 1.0) {
            return Err(config_err("dataset.learning_rate must lie in (0, 1]"));
        }
        if d.max_episode_steps == 0 {
            return Err(config_err("dataset.max_episode_steps must be positive"));
        }
        if matches!(env, EnvSpec::Random { .. }) && !(0.0..1.0).contains(&d.gamma) {
            return Err(config_err("dataset.gamma must lie in [0, 1)"));
        }
        if self.ensemble.members == 0 {
            return Err(config_err("ensemble.members must be positive"));
        }
        let c = &self.counting;
        if c.method == CountMethod::Hash {
            if c.members == 0 || c.code_bits == 0 || c.code_bits > countmorl_core::counting::MAX_CODE_BITS {
                return Err(config_err("counting.members must be positive and counting.code_bits in 1..=128"));
            }
            if !(0.0..=1.0).contains(&c.rho) {
                return Err(config_err("counting.rho must lie in [0, 1]"));
            }
        }
        self.penalty_spec()?;
        self.planner.rollout(0).validate().map_err(|e| config_err(format!("planner: {e}")))?;
        if self.eval.num_seeds == 0 || !(self.eval.tol > 0.0) {
            return Err(config_err("eval.num_seeds and eval.tol must be positive"));
        }
        let t = &self.theory;
        if t.num_states * t.num_actions > 12 {
            return Err(config_err("theory MDP too large for policy enumeration (need S*A <= 12)"));
        }
        if t.num_states == 0 || t.num_actions == 0 || t.tv_num_states == 0 || t.tv_num_actions == 0 {
            return Err(config_err("theory MDP sizes must be positive"));
        }
        if !(0.0..1.0).contains(&t.gamma) || !(t.delta > 0.0 && t.delta < 1.0) || !(t.tol > 0.0) {
            return Err(config_err("theory.gamma in [0,1), theory.delta in (0,1), theory.tol > 0"));
        }
        if t.min_transitions == 0 || t.min_transitions > t.max_transitions {
            return Err(config_err("theory: need 0 < min_transitions <= max_transitions"));
        }
        if t.tv_min_transitions == 0 || t.tv_min_transitions > t.tv_max_transitions || t.tv_draws < 2 {
            return Err(config_err("theory: need 0 < tv_min_transitions <= tv_max_transitions and tv_draws >= 2"));
        }
        if t.reps == 0 || t.calib_reps == 0 {
            return Err(config_err("theory.reps and theory.calib_reps must be positive"));
        }
        Ok(())
    }
}

/// One point of a sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub mode: String,
    pub beta: f64,
    pub horizon: usize,
    pub code_bits: usize,
    pub alpha: f64,
}

impl SweepCell {
    pub fn apply(&self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        cfg.counting.mode = self.mode.clone();
        cfg.penalty.beta = self.beta;
        cfg.planner.horizon = self.horizon;
        cfg.counting.code_bits = self.code_bits;
        cfg.counting.alpha = self.alpha;
        cfg
    }
}

fn axis<T: Clone>(name: &str, axis: &Option<Vec<T>>, base: T) -> Result<Vec<T>, StageError> {
    match axis {
        None => Ok(vec![base]),
        Some(v) if v.is_empty() => Err(config_err(format!("sweep axis '{name}' is empty"))),
        Some(v) => Ok(v.clone()),
    }
}

impl ExperimentConfig {
    /// Cartesian product of the sweep axes, in a fixed order.
    pub fn sweep_cells(&self) -> Result<Vec<SweepCell>, StageError> {
        let s = &self.sweep;
        let modes = axis("modes", &s.modes, self.counting.mode.clone())?;
        let betas = axis("betas", &s.betas, self.penalty.beta)?;
        let horizons = axis("horizons", &s.horizons, self.planner.horizon)?;
        let bits = axis("code_bits", &s.code_bits, self.counting.code_bits)?;
        let alphas = axis("alphas", &s.alphas, self.counting.alpha)?;
        let mut cells = Vec::new();
        for beta in &betas {
            for &horizon in &horizons {
                for &code_bits in &bits {
                    for alpha in &alphas {
                        for mode in &modes {
                            let cell = SweepCell { mode: mode.clone(), beta: *beta, horizon, code_bits, alpha: *alpha };
                            cell.apply(self).validate()?;
                            cells.push(cell);
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}
