//! Numerical checks of the estimation-error bound and the value-gap,
//! pessimism and sub-optimality inequalities on small random MDPs.

use std::fmt::Write as _;

use countmorl_core::dataset::generate_dataset;
use countmorl_core::mdp::{discounted_visitation, enumerate_deterministic_policies};
use countmorl_core::sampling::{derive_seed, seeded};
use countmorl_core::synthetic::random_mdp;
use countmorl_core::{
    build_conservative_mdp, error_bound, exact_counts, exact_plan, fit_ensemble, fit_mle, scalar_return, tv_errors,
    CountMode, CountTable, ErrorBoundConfig, KnownEnv, OfflineDataset, PenaltySpec, PolicyTable, TabularMdp,
};
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, TheoryConfig};
use crate::error::{AtStage, Stage, StageError};

pub const SLOPE_RANGE: (f64, f64) = (-0.65, -0.35);
/// Required coverage: `1 - delta` minus Monte-Carlo slack at the default delta.
pub const COVERAGE_SLACK: f64 = 0.02;
/// Smallest count entering the regression.
pub const MIN_BIN_COUNT: u64 = 10;
pub const MAX_BIN_COUNT: u64 = 10_000;
/// Bins with fewer samples are left out of the regression.
pub const MIN_BIN_SAMPLES: usize = 5;
const EPISODE_CAP: usize = 50;
const EVAL_TOL: f64 = 1e-11;

fn uniform_data(mdp: &TabularMdp, n: usize, seed: u64) -> Result<OfflineDataset, StageError> {
    let pi = PolicyTable::uniform(mdp.num_states(), mdp.num_actions());
    generate_dataset(mdp, &pi, n, seed, EPISODE_CAP).at(Stage::Data)
}

/// Log-uniform dataset size in `[lo, hi]` drawn from `seed`.
fn log_uniform_size(lo: usize, hi: usize, seed: u64) -> usize {
    let u: f64 = seeded(seed).random();
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    ((a + u * (b - a)).exp().round() as usize).clamp(lo, hi)
}

/// `(n(s,a), TV)` for every observed pair.
fn observed_errors(mdp: &TabularMdp, data: &OfflineDataset) -> Result<Vec<(u64, f64)>, StageError> {
    let counts = exact_counts(data);
    let tv = tv_errors(&fit_mle(data), mdp).at(Stage::Model)?;
    Ok(counts.counts().iter().zip(tv).filter(|(&n, _)| n > 0).map(|(&n, t)| (n, t)).collect())
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvBin {
    pub lo: u64,
    pub hi: u64,
    pub samples: usize,
    pub median_count: f64,
    pub median_tv: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvScaling {
    pub bins: Vec<TvBin>,
    pub slope: f64,
    pub intercept: f64,
    pub draws: usize,
}

/// Least-squares fit `y = a + b x`; returns `(a, b)`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let b = sxy / sxx;
    (my - b * mx, b)
}

/// Median TV per doubling count bin `[n, 2n)` and the log-log slope.
pub fn tv_scaling(t: &TheoryConfig, seed: u64) -> Result<TvScaling, StageError> {
    let mdp = random_mdp(t.tv_num_states, t.tv_num_actions, t.gamma, derive_seed(seed, 10)).at(Stage::Config)?;
    let (lo, hi) = ((t.tv_min_transitions as f64).ln(), (t.tv_max_transitions as f64).ln());
    let samples = (0..t.tv_draws)
        .into_par_iter()
        .map(|k| {
            let n = (lo + (hi - lo) * k as f64 / (t.tv_draws - 1) as f64).exp().round() as usize;
            observed_errors(&mdp, &uniform_data(&mdp, n, derive_seed(seed, 1000 + k as u64))?)
        })
        .collect::<Result<Vec<_>, _>>()?
        .concat();
    let mut bins = Vec::new();
    let mut b = MIN_BIN_COUNT;
    while b < MAX_BIN_COUNT {
        let hi = (2 * b).min(MAX_BIN_COUNT + 1);
        let (mut ns, mut tvs): (Vec<f64>, Vec<f64>) =
            samples.iter().filter(|(n, _)| (b..hi).contains(n)).map(|&(n, tv)| (n as f64, tv)).unzip();
        if ns.len() >= MIN_BIN_SAMPLES {
            bins.push(TvBin { lo: b, hi, samples: ns.len(), median_count: median(&mut ns), median_tv: median(&mut tvs) });
        }
        b *= 2;
    }
    if bins.len() < 2 {
        return Err(StageError::new(Stage::Check, "too few populated count bins for the TV regression"));
    }
    let pts: Vec<(f64, f64)> = bins.iter().map(|b| (b.median_count.ln(), b.median_tv.ln())).collect();
    let (intercept, slope) = linear_fit(&pts);
    Ok(TvScaling { bins, slope, intercept, draws: t.tv_draws })
}

/// Smallest `log_model_class` covering a `1 - delta` fraction of the
/// `(n, TV)` samples, floored at a tiny positive value. A `1e-9` margin
/// keeps the quantile sample itself covered after rounding.
pub fn calibrate_log_model_class(samples: &[(u64, f64)], delta: f64) -> f64 {
    let ln_inv_delta = (1.0 / delta).ln();
    let mut need: Vec<f64> = samples.iter().map(|&(n, tv)| n as f64 * tv * tv / 2.0 - ln_inv_delta).collect();
    need.sort_by(f64::total_cmp);
    if need.is_empty() {
        return 1e-6;
    }
    let k = ((1.0 - delta) * need.len() as f64).ceil() as usize;
    (need[k.clamp(1, need.len()) - 1] + 1e-9).max(1e-6)
}

pub fn coverage(samples: &[(u64, f64)], bound: &ErrorBoundConfig) -> f64 {
    let hit = samples.iter().filter(|&&(n, tv)| tv <= error_bound(n as f64, bound)).count();
    hit as f64 / samples.len().max(1) as f64
}

/// Result of one repetition of the inequality checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RepCheck {
    pub rep: usize,
    pub dataset_len: usize,
    /// TV <= error bound at every pair.
    pub event: bool,
    /// Smallest slack of each inequality over the enumerated policies;
    /// negative beyond `-tol` means a violation.
    pub lemma_margin: f64,
    pub pessimism_margin: f64,
    pub suboptimality_margin: f64,
}

impl RepCheck {
    pub fn violations(&self, tol: f64) -> [bool; 3] {
        [self.lemma_margin < -tol, self.pessimism_margin < -tol, self.suboptimality_margin < -tol]
    }
}

fn per_pair_bound(counts: &CountTable, bound: &ErrorBoundConfig) -> Vec<f64> {
    counts.counts().iter().map(|&n| error_bound(n as f64, bound)).collect()
}

/// Checks the three inequalities for one dataset with exact counts.
pub fn check_inequalities(
    mdp: &TabularMdp,
    data: &OfflineDataset,
    bound: &ErrorBoundConfig,
    rep: usize,
) -> Result<RepCheck, StageError> {
    let counts = exact_counts(data);
    let ensemble = fit_ensemble(data, 1, 0, true).at(Stage::Model)?;
    let env = KnownEnv::from_mdp(mdp);
    let unpenalized = PenaltySpec::practical(0.0, CountMode::Avg, 0.0).at(Stage::Config)?;
    let mhat = build_conservative_mdp(&ensemble, &counts, &env, &unpenalized).at(Stage::Model)?.base;
    let theory = PenaltySpec::theory(*bound, CountMode::Avg, 0.0).at(Stage::Config)?;
    let cmdp = build_conservative_mdp(&ensemble, &counts, &env, &theory).at(Stage::Model)?;

    let c = per_pair_bound(&counts, bound);
    let na = mdp.num_actions();
    let mut event = true;
    for s in 0..mdp.num_states() {
        for a in 0..na {
            let tv = countmorl_core::total_variation(mhat.row(s, a), mdp.row(s, a)).at(Stage::Model)?;
            event &= tv <= c[s * na + a];
        }
    }

    let gamma = mdp.gamma();
    let k = gamma * mdp.r_max() / (1.0 - gamma).powi(2);
    let ret = |m: &TabularMdp, pi: &PolicyTable| scalar_return(m, pi, EVAL_TOL).at(Stage::Evaluation);
    let (mut lemma, mut pess, mut best_lower) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for pi in enumerate_deterministic_policies(mdp.num_states(), na) {
        let v_true = ret(mdp, &pi)?;
        let v_hat = ret(&mhat, &pi)?;
        let v_tilde = ret(&cmdp.base, &pi)?;
        let expected_c = discounted_visitation(&mhat, &pi, EVAL_TOL).at(Stage::Evaluation)?.expect(&c);
        lemma = lemma.min(k * expected_c - (v_hat - v_true).abs());
        pess = pess.min(v_true - v_tilde);
        best_lower = best_lower.max(v_true - 2.0 * k * expected_c);
    }
    let (pi_hat, _) = exact_plan(&cmdp, EVAL_TOL).at(Stage::Planning)?;
    let sub = ret(mdp, &pi_hat)? - best_lower;
    Ok(RepCheck { rep, dataset_len: data.len(), event, lemma_margin: lemma, pessimism_margin: pess, suboptimality_margin: sub })
}

#[derive(Debug, Clone)]
pub struct TheoryReport {
    pub config_hash: String,
    pub seed: u64,
    pub scaling: TvScaling,
    pub delta: f64,
    pub calibrated_log_model_class: f64,
    pub coverage: f64,
    pub coverage_samples: usize,
    pub default_log_model_class: f64,
    pub default_coverage: f64,
    pub reps: Vec<RepCheck>,
    pub tol: f64,
}

impl TheoryReport {
    pub fn events(&self) -> usize {
        self.reps.iter().filter(|r| r.event).count()
    }

    /// Violations of (lemma, pessimism, sub-optimality) among reps where the event held.
    pub fn conditional_violations(&self) -> [usize; 3] {
        let mut v = [0; 3];
        for r in self.reps.iter().filter(|r| r.event) {
            for (slot, bad) in v.iter_mut().zip(r.violations(self.tol)) {
                *slot += bad as usize;
            }
        }
        v
    }

    pub fn slope_ok(&self) -> bool {
        (SLOPE_RANGE.0..=SLOPE_RANGE.1).contains(&self.scaling.slope)
    }

    pub fn coverage_ok(&self) -> bool {
        self.coverage >= 1.0 - self.delta - COVERAGE_SLACK
    }

    pub fn passed(&self) -> bool {
        self.slope_ok() && self.coverage_ok() && self.conditional_violations() == [0; 3]
    }

    pub fn summary_csv(&self) -> String {
        let v = self.conditional_violations();
        let mut out = String::from("config_hash,seed,metric,value\n");
        let rows: Vec<(&str, String)> = vec![
            ("tv_slope", format!("{:?}", self.scaling.slope)),
            ("tv_intercept", format!("{:?}", self.scaling.intercept)),
            ("tv_draws", self.scaling.draws.to_string()),
            ("delta", format!("{:?}", self.delta)),
            ("calibrated_log_model_class", format!("{:?}", self.calibrated_log_model_class)),
            ("coverage", format!("{:?}", self.coverage)),
            ("coverage_samples", self.coverage_samples.to_string()),
            ("default_log_model_class", format!("{:?}", self.default_log_model_class)),
            ("default_coverage", format!("{:?}", self.default_coverage)),
            ("reps", self.reps.len().to_string()),
            ("events", self.events().to_string()),
            ("lemma_violations", v[0].to_string()),
            ("pessimism_violations", v[1].to_string()),
            ("suboptimality_violations", v[2].to_string()),
            ("passed", self.passed().to_string()),
        ];
        for (k, val) in rows {
            let _ = writeln!(out, "{},{},{k},{val}", self.config_hash, self.seed);
        }
        out
    }

    pub fn bins_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,count_lo,count_hi,samples,median_count,median_tv\n");
        for b in &self.scaling.bins {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:?},{:?}",
                self.config_hash, self.seed, b.lo, b.hi, b.samples, b.median_count, b.median_tv
            );
        }
        out
    }

    pub fn reps_csv(&self) -> String {
        let mut out = String::from(
            "config_hash,seed,rep,dataset_len,event,lemma_margin,pessimism_margin,suboptimality_margin\n",
        );
        for r in &self.reps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:?},{:?},{:?}",
                self.config_hash, self.seed, r.rep, r.dataset_len, r.event, r.lemma_margin, r.pessimism_margin, r.suboptimality_margin
            );
        }
        out
    }
}

fn batch(
    mdp: &TabularMdp,
    t: &TheoryConfig,
    seed: u64,
    offset: u64,
    reps: usize,
) -> Result<Vec<OfflineDataset>, StageError> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, offset + r as u64);
            let n = log_uniform_size(t.min_transitions, t.max_transitions, derive_seed(s, 0));
            uniform_data(mdp, n, derive_seed(s, 1))
        })
        .collect()
}

pub fn theory_check(cfg: &ExperimentConfig, workers: usize) -> Result<TheoryReport, StageError> {
    cfg.validate()?;
    let t = &cfg.theory;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| StageError::new(Stage::Config, e.to_string()))?;
    pool.install(|| {
        let scaling = tv_scaling(t, cfg.seed)?;
        let mdp = random_mdp(t.num_states, t.num_actions, t.gamma, derive_seed(cfg.seed, t.mdp_seed)).at(Stage::Config)?;

        let calib = batch(&mdp, t, cfg.seed, 1 << 20, t.calib_reps)?;
        let calib_samples = calib.iter().map(|d| observed_errors(&mdp, d)).collect::<Result<Vec<_>, _>>()?.concat();
        let l = calibrate_log_model_class(&calib_samples, t.delta);
        let bound = ErrorBoundConfig::new(t.delta, l).at(Stage::Config)?;

        let eval = batch(&mdp, t, cfg.seed, 2 << 20, t.reps)?;
        let samples = eval.iter().map(|d| observed_errors(&mdp, d)).collect::<Result<Vec<_>, _>>()?.concat();
        let default_l = ErrorBoundConfig::default_log_model_class(t.num_states, 1.0);
        let default_bound = ErrorBoundConfig::new(t.delta, default_l).at(Stage::Config)?;

        let reps = eval
            .par_iter()
            .enumerate()
            .map(|(i, d)| check_inequalities(&mdp, d, &bound, i))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TheoryReport {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            scaling,
            delta: t.delta,
            calibrated_log_model_class: l,
            coverage: coverage(&samples, &bound),
            coverage_samples: samples.len(),
            default_log_model_class: default_l,
            default_coverage: coverage(&samples, &default_bound),
            reps,
            tol: t.tol,
        })
    })
}
