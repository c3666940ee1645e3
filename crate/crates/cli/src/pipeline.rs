//! The end-to-end experiment: data, models, counts, planning, evaluation.

use std::fmt::Write as _;
use std::time::Instant;

use countmorl_core::conservative::PenaltyStats;
use countmorl_core::dataset::{generate_dataset, load_dataset};
use countmorl_core::gridworld::GridLayout;
use countmorl_core::mdp::value_iteration;
use countmorl_core::planner::policy_to_csv;
use countmorl_core::sampling::derive_seed;
use countmorl_core::synthetic::random_mdp;
use countmorl_core::{
    build_conservative_mdp, build_gridworld, count_audit, exact_counts, exact_plan, fit_ensemble, rollout_plan,
    scalar_return, train_behavior, BehaviorTrainConfig, CountAudit, CountEnsemble, CountEstimator, CountMode,
    CountTable, DatasetMeta, FeatureKind, KnownEnv, OfflineDataset, PenaltySpec, PolicyTable, TabularMdp,
};
use rayon::prelude::*;

use crate::config::{
    CountMethod, DatasetSource, EnvSpec, ExperimentConfig, FeatureChoice, PlannerKind, SweepCell,
};
use crate::error::{AtStage, Stage, StageError};

/// The true environment of an experiment.
#[derive(Debug, Clone)]
pub struct Environment {
    pub spec: EnvSpec,
    pub mdp: TabularMdp,
    pub known: KnownEnv,
    pub layout: Option<GridLayout>,
}

impl Environment {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self, StageError> {
        let spec = cfg.env()?;
        match spec {
            EnvSpec::Grid(kind) => {
                let layout = GridLayout::builtin(kind);
                let mdp = build_gridworld(&layout).at(Stage::Config)?;
                let known = KnownEnv::from_mdp(&mdp).with_terminal(layout.terminal_mask());
                Ok(Self { spec, mdp, known, layout: Some(layout) })
            }
            EnvSpec::Random { num_states, num_actions } => {
                let mdp = random_mdp(num_states, num_actions, cfg.dataset.gamma, cfg.seed).at(Stage::Config)?;
                let known = KnownEnv::from_mdp(&mdp);
                Ok(Self { spec, mdp, known, layout: None })
            }
        }
    }

    pub fn num_pairs(&self) -> usize {
        self.mdp.num_states() * self.mdp.num_actions()
    }
}

/// Independent random streams of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    pub seed: u64,
    pub behavior: u64,
    pub data: u64,
    pub ensemble: u64,
    pub counts: u64,
    pub planner: u64,
}

impl SeedStreams {
    /// Seed `index` of an experiment whose base seed is `base`.
    pub fn new(base: u64, index: usize) -> Self {
        let seed = base.wrapping_add(index as u64);
        Self {
            seed,
            behavior: derive_seed(seed, 0),
            data: derive_seed(seed, 1),
            ensemble: derive_seed(seed, 2),
            counts: derive_seed(seed, 3),
            planner: derive_seed(seed, 4),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub data: OfflineDataset,
    /// The data-collecting policy when it is known.
    pub behavior: Option<PolicyTable>,
}

pub fn make_dataset(cfg: &ExperimentConfig, env: &Environment, streams: &SeedStreams) -> Result<DatasetBundle, StageError> {
    let d = &cfg.dataset;
    let train = |min_transitions: usize, seed: u64| {
        let bcfg = BehaviorTrainConfig {
            episodes: d.train_episodes,
            epsilon: d.train_epsilon,
            learning_rate: d.learning_rate,
            max_episode_steps: d.max_episode_steps,
            min_transitions,
            seed,
        };
        train_behavior(&env.mdp, &bcfg).at(Stage::Data)
    };
    let (data, behavior) = match d.source {
        DatasetSource::Replay => {
            let run = train(d.transitions, streams.data)?;
            let behavior = run.epsilon_greedy(d.train_epsilon).at(Stage::Data)?;
            (run.dataset, Some(behavior))
        }
        DatasetSource::Policy => {
            let run = train(0, streams.behavior)?;
            let behavior = run.epsilon_greedy(d.behavior_epsilon).at(Stage::Data)?;
            let data = generate_dataset(&env.mdp, &behavior, d.transitions, streams.data, d.max_episode_steps)
                .at(Stage::Data)?;
            (data, Some(behavior))
        }
        DatasetSource::File => {
            let path = d.path.as_ref().ok_or_else(|| StageError::new(Stage::Data, "dataset.path missing"))?;
            let data = load_dataset(path).at(Stage::Data)?;
            if (data.num_states(), data.num_actions()) != (env.mdp.num_states(), env.mdp.num_actions()) {
                return Err(StageError::new(Stage::Data, "dataset dimensions do not match the environment"));
            }
            (data, None)
        }
    };
    let meta = DatasetMeta { env_id: cfg.env_id.clone(), ..data.meta().clone() };
    Ok(DatasetBundle { data: data.with_meta(meta), behavior })
}

/// Either exact counts or a hashing ensemble, behind one estimator.
pub enum Counts {
    Exact(CountTable),
    Hash(CountEnsemble),
}

impl Counts {
    pub fn estimator(&self) -> &dyn CountEstimator {
        match self {
            Counts::Exact(t) => t,
            Counts::Hash(e) => e,
        }
    }
}

pub fn hash_ensemble(cfg: &ExperimentConfig, env: &Environment, seed: u64) -> Result<CountEnsemble, StageError> {
    let c = &cfg.counting;
    let kind = match c.features {
        FeatureChoice::OneHot => FeatureKind::OneHot,
        FeatureChoice::NoisyOneHot => FeatureKind::NoisyOneHot { rho: c.rho },
    };
    CountEnsemble::new(env.mdp.num_states(), env.mdp.num_actions(), kind, c.code_bits, c.members, c.alpha, seed)
        .at(Stage::Counting)
}

pub fn make_counts(cfg: &ExperimentConfig, env: &Environment, data: &OfflineDataset, seed: u64) -> Result<Counts, StageError> {
    match cfg.counting.method {
        CountMethod::Exact => Ok(Counts::Exact(exact_counts(data))),
        CountMethod::Hash => {
            let mut ens = hash_ensemble(cfg, env, seed)?;
            ens.ingest_dataset(data).at(Stage::Counting)?;
            Ok(Counts::Hash(ens))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditSummary {
    pub max_abs_error: [f64; 3],
    pub max_member_error: u64,
    pub colliding_pairs: usize,
}

impl From<&CountAudit> for AuditSummary {
    fn from(a: &CountAudit) -> Self {
        Self { max_abs_error: a.max_abs_error, max_member_error: a.max_member_error, colliding_pairs: a.colliding_pairs.len() }
    }
}

/// Everything measured for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedReport {
    pub seed: u64,
    pub dataset_len: usize,
    pub learned_return: f64,
    pub behavior_return: Option<f64>,
    /// Same pipeline with the penalty switched off.
    pub baseline_return: f64,
    pub optimal_return: f64,
    pub penalty: PenaltyStats,
    pub audit: Option<AuditSummary>,
    pub policy: PolicyTable,
}

pub fn run_seed(cfg: &ExperimentConfig, env: &Environment, index: usize) -> Result<SeedReport, StageError> {
    let streams = SeedStreams::new(cfg.seed, index);
    let bundle = make_dataset(cfg, env, &streams)?;
    let data = &bundle.data;
    if data.is_empty() {
        return Err(StageError::new(Stage::Data, "dataset is empty"));
    }
    let ensemble = fit_ensemble(data, cfg.ensemble.members, streams.ensemble, cfg.ensemble.include_plain).at(Stage::Model)?;
    let counts = make_counts(cfg, env, data, streams.counts)?;
    let audit = match &counts {
        Counts::Hash(ens) => Some(AuditSummary::from(&count_audit(ens, &exact_counts(data)).at(Stage::Counting)?)),
        Counts::Exact(_) => None,
    };
    let spec = cfg.penalty_spec()?;
    let est = counts.estimator();
    let cmdp = build_conservative_mdp(&ensemble, est, &env.known, &spec).at(Stage::Planning)?;
    let tol = cfg.eval.tol;
    let policy = match cfg.planner.kind {
        PlannerKind::Exact => exact_plan(&cmdp, tol).at(Stage::Planning)?.0,
        PlannerKind::Rollout => {
            let rcfg = cfg.planner.rollout(streams.planner);
            rollout_plan(&ensemble, est, data, &env.known, &spec, &rcfg).at(Stage::Planning)?.policy
        }
    };
    let unpenalized = PenaltySpec::practical(0.0, CountMode::Avg, 0.0).at(Stage::Planning)?;
    let base_mdp = build_conservative_mdp(&ensemble, est, &env.known, &unpenalized).at(Stage::Planning)?;
    let baseline = exact_plan(&base_mdp, tol).at(Stage::Planning)?.0;

    let ret = |pi: &PolicyTable| scalar_return(&env.mdp, pi, tol).at(Stage::Evaluation);
    let optimal = value_iteration(&env.mdp, tol).at(Stage::Evaluation)?.1;
    Ok(SeedReport {
        seed: streams.seed,
        dataset_len: data.len(),
        learned_return: ret(&policy)?,
        behavior_return: bundle.behavior.as_ref().map(ret).transpose()?,
        baseline_return: ret(&baseline)?,
        optimal_return: ret(&optimal)?,
        penalty: cmdp.stats(),
        audit,
        policy,
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, StageError> {
    rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| StageError::new(Stage::Config, e.to_string()))
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub config_hash: String,
    pub env_id: String,
    pub seeds: Vec<SeedReport>,
    /// Not part of any CSV, so reruns compare equal.
    pub wall_clock_secs: f64,
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v:?}"))
}

impl ExperimentReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "config_hash,seed,env_id,dataset_len,learned_return,behavior_return,baseline_return,optimal_return,\
             penalty_mean,penalty_max,penalty_frac_at_max,count_err_lc,count_err_avg,count_err_uc,count_member_err,colliding_pairs\n",
        );
        for r in &self.seeds {
            let (err, member, coll) = match &r.audit {
                Some(a) => (
                    a.max_abs_error.map(|e| format!("{e:?}")).join(","),
                    a.max_member_error.to_string(),
                    a.colliding_pairs.to_string(),
                ),
                None => (",,".into(), String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{:?},{},{:?},{:?},{:?},{:?},{:?},{err},{member},{coll}",
                self.config_hash,
                r.seed,
                self.env_id,
                r.dataset_len,
                r.learned_return,
                opt(r.behavior_return),
                r.baseline_return,
                r.optimal_return,
                r.penalty.mean,
                r.penalty.max,
                r.penalty.frac_at_max,
            );
        }
        out
    }

    pub fn mean_learned(&self) -> f64 {
        mean(&self.seeds.iter().map(|r| r.learned_return).collect::<Vec<_>>())
    }

    pub fn policy_csv(&self, i: usize) -> String {
        crate::output::tag_csv(&policy_to_csv(&self.seeds[i].policy), &self.config_hash, self.seeds[i].seed)
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport, StageError> {
    let start = Instant::now();
    cfg.validate()?;
    let env = Environment::build(cfg)?;
    let seeds = pool(workers)?.install(|| {
        (0..cfg.eval.num_seeds).into_par_iter().map(|i| run_seed(cfg, &env, i)).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(ExperimentReport {
        config_hash: cfg.hash(),
        env_id: cfg.env_id.clone(),
        seeds,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cell: usize,
    pub seed: u64,
    pub learned_return: f64,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub config_hash: String,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    fn cell_returns(&self, cell: usize) -> Vec<f64> {
        self.rows.iter().filter(|r| r.cell == cell).map(|r| r.learned_return).collect()
    }

    pub fn cell_mean(&self, cell: usize) -> f64 {
        mean(&self.cell_returns(cell))
    }

    /// One row per (cell, seed).
    pub fn long_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,cell,mode,beta,horizon,code_bits,alpha,learned_return\n");
        for r in &self.rows {
            let c = &self.cells[r.cell];
            let _ = writeln!(
                out,
                "{},{},{},{},{:?},{},{},{:?},{:?}",
                self.config_hash, r.seed, r.cell, c.mode, c.beta, c.horizon, c.code_bits, c.alpha, r.learned_return
            );
        }
        out
    }

    /// Mean and sample std per cell. `seed` is the first seed of the cell.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,cell,mode,beta,horizon,code_bits,alpha,n,mean_return,std_return\n");
        for (i, c) in self.cells.iter().enumerate() {
            let xs = self.cell_returns(i);
            let first = self.rows.iter().find(|r| r.cell == i).map_or(0, |r| r.seed);
            let _ = writeln!(
                out,
                "{},{first},{i},{},{:?},{},{},{:?},{},{:?},{:?}",
                self.config_hash,
                c.mode,
                c.beta,
                c.horizon,
                c.code_bits,
                c.alpha,
                xs.len(),
                mean(&xs),
                sample_std(&xs)
            );
        }
        out
    }

    /// Mean return per count mode for every other grid point.
    pub fn mode_table(&self) -> Vec<ModeRow> {
        let mut table: Vec<ModeRow> = Vec::new();
        for (i, c) in self.cells.iter().enumerate() {
            let key = (c.beta, c.horizon, c.code_bits, c.alpha);
            let pos = match table.iter().position(|r| (r.beta, r.horizon, r.code_bits, r.alpha) == key) {
                Some(p) => p,
                None => {
                    table.push(ModeRow { beta: c.beta, horizon: c.horizon, code_bits: c.code_bits, alpha: c.alpha, means: [None; 3] });
                    table.len() - 1
                }
            };
            if let Ok(mode) = c.mode.parse::<CountMode>() {
                let slot = CountMode::ALL.iter().position(|m| *m == mode).expect("mode listed");
                table[pos].means[slot] = Some(self.cell_mean(i));
            }
        }
        table
    }

    pub fn mode_table_csv(&self, seed: u64) -> String {
        let mut out = String::from("config_hash,seed,beta,horizon,code_bits,alpha,lc_mean,avg_mean,uc_mean\n");
        for r in self.mode_table() {
            let _ = writeln!(
                out,
                "{},{seed},{:?},{},{},{:?},{},{},{}",
                self.config_hash,
                r.beta,
                r.horizon,
                r.code_bits,
                r.alpha,
                opt(r.means[0]),
                opt(r.means[1]),
                opt(r.means[2])
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRow {
    pub beta: f64,
    pub horizon: usize,
    pub code_bits: usize,
    pub alpha: f64,
    /// LC, AVG, UC.
    pub means: [Option<f64>; 3],
}

pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<SweepReport, StageError> {
    cfg.validate()?;
    let cells = cfg.sweep_cells()?;
    let env = Environment::build(cfg)?;
    let configs: Vec<ExperimentConfig> = cells.iter().map(|c| c.apply(cfg)).collect();
    let jobs: Vec<(usize, usize)> =
        (0..cells.len()).flat_map(|c| (0..cfg.eval.num_seeds).map(move |s| (c, s))).collect();
    let rows = pool(workers)?.install(|| {
        jobs.par_iter()
            .map(|&(c, s)| {
                run_seed(&configs[c], &env, s).map(|r| SweepRow { cell: c, seed: r.seed, learned_return: r.learned_return })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(SweepReport { config_hash: cfg.hash(), cells, rows })
}
