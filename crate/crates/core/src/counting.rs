//! Approximate visit counts from an ensemble of hashing counters.
//!
//! Each member maps a state-action pair to a feature vector, hashes it
//! to a `d`-bit code with signed random projections (bit `j` is set when
//! the `j`-th Gaussian projection is `>= 0`), and counts codes. The
//! ensemble combines member counts into a lower-confidence, average or
//! upper-confidence estimate `mean -/+ alpha * std`, with the sample
//! standard deviation over members.

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{CountTable, OfflineDataset};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, seeded};

/// Widest supported code, in bits.
pub const MAX_CODE_BITS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CountMode {
    /// `mean - alpha * std`
    Lc,
    /// `mean`
    Avg,
    /// `mean + alpha * std`
    Uc,
}

impl CountMode {
    pub const ALL: [CountMode; 3] = [CountMode::Lc, CountMode::Avg, CountMode::Uc];

    pub fn name(self) -> &'static str {
        match self {
            CountMode::Lc => "LC",
            CountMode::Avg => "AVG",
            CountMode::Uc => "UC",
        }
    }
}

impl fmt::Display for CountMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CountMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LC" => Ok(CountMode::Lc),
            "AVG" => Ok(CountMode::Avg),
            "UC" => Ok(CountMode::Uc),
            _ => Err(Error::invalid(format!("unknown count mode '{s}'"))),
        }
    }
}

/// Anything that can report an (approximate) count for a pair.
pub trait CountEstimator {
    fn dims(&self) -> (usize, usize);

    /// Estimate under `mode` with standard-deviation coefficient `alpha`.
    fn estimate(&self, s: usize, a: usize, mode: CountMode, alpha: f64) -> f64;

    /// Rejects modes the estimator cannot serve.
    fn check_mode(&self, _mode: CountMode, _alpha: f64) -> Result<()> {
        Ok(())
    }
}

/// Exact counts, identical under every mode.
impl CountEstimator for CountTable {
    fn dims(&self) -> (usize, usize) {
        (self.num_states(), self.num_actions())
    }

    fn estimate(&self, s: usize, a: usize, _mode: CountMode, _alpha: f64) -> f64 {
        self.get(s, a) as f64
    }
}

/// Deterministic feature map from pairs to `R^k`, `k = S * A`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    OneHot { num_states: usize, num_actions: usize },
    /// One-hot plus a fixed Gaussian perturbation of scale `rho` per pair,
    /// drawn once at construction.
    NoisyOneHot { num_states: usize, num_actions: usize, rho: f64, noise: Vec<f64> },
}

impl FeatureMap {
    pub fn one_hot(num_states: usize, num_actions: usize) -> Self {
        FeatureMap::OneHot { num_states, num_actions }
    }

    pub fn noisy_one_hot(num_states: usize, num_actions: usize, rho: f64, seed: u64) -> Self {
        let k = num_states * num_actions;
        let mut rng = seeded(seed);
        let noise = (0..k * k).map(|_| rho * rng.sample::<f64, _>(StandardNormal)).collect();
        FeatureMap::NoisyOneHot { num_states, num_actions, rho, noise }
    }

    pub fn dim(&self) -> usize {
        let (ns, na) = self.pairs();
        ns * na
    }

    fn pairs(&self) -> (usize, usize) {
        match *self {
            FeatureMap::OneHot { num_states, num_actions } => (num_states, num_actions),
            FeatureMap::NoisyOneHot { num_states, num_actions, .. } => (num_states, num_actions),
        }
    }

    pub fn features(&self, s: usize, a: usize) -> Vec<f64> {
        let (_, na) = self.pairs();
        let k = self.dim();
        let idx = s * na + a;
        let mut x = match self {
            FeatureMap::OneHot { .. } => vec![0.0; k],
            FeatureMap::NoisyOneHot { noise, .. } => noise[idx * k..(idx + 1) * k].to_vec(),
        };
        x[idx] += 1.0;
        x
    }
}

/// `d`-bit sign-of-projection hash with a count table over codes.
#[derive(Debug, Clone, PartialEq)]
pub struct HashCounter {
    code_bits: usize,
    input_dim: usize,
    /// Row-major `[d][k]`.
    projections: Vec<f64>,
    table: HashMap<u128, u64>,
    total: u64,
}

impl HashCounter {
    pub fn new(code_bits: usize, input_dim: usize, seed: u64) -> Result<Self> {
        if code_bits == 0 || code_bits > MAX_CODE_BITS {
            return Err(Error::invalid(format!("code_bits must lie in 1..={MAX_CODE_BITS}, got {code_bits}")));
        }
        if input_dim == 0 {
            return Err(Error::invalid("input dimension must be positive"));
        }
        let mut rng = seeded(seed);
        let projections = (0..code_bits * input_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Ok(Self { code_bits, input_dim, projections, table: HashMap::new(), total: 0 })
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn code(&self, x: &[f64]) -> Result<u128> {
        if x.len() != self.input_dim {
            return Err(Error::dim(format!("feature has dimension {}, counter expects {}", x.len(), self.input_dim)));
        }
        let mut code = 0u128;
        for (bit, w) in self.projections.chunks(self.input_dim).enumerate() {
            let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            if dot >= 0.0 {
                code |= 1u128 << bit;
            }
        }
        Ok(code)
    }

    pub fn ingest_code(&mut self, code: u128) {
        *self.table.entry(code).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn ingest(&mut self, x: &[f64]) -> Result<()> {
        let c = self.code(x)?;
        self.ingest_code(c);
        Ok(())
    }

    pub fn count_code(&self, code: u128) -> u64 {
        self.table.get(&code).copied().unwrap_or(0)
    }

    pub fn count(&self, x: &[f64]) -> Result<u64> {
        Ok(self.count_code(self.code(x)?))
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Sum over the table; equals [`Self::total`].
    pub fn table_mass(&self) -> u64 {
        self.table.values().sum()
    }

    pub fn distinct_codes(&self) -> usize {
        self.table.len()
    }

    pub fn reset(&mut self) {
        self.table.clear();
        self.total = 0;
    }
}

/// Which feature map the members use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    OneHot,
    NoisyOneHot { rho: f64 },
}

#[derive(Debug, Clone, PartialEq)]
struct CountMember {
    feature: FeatureMap,
    counter: HashCounter,
    /// Code of every pair, `[S][A]`.
    codes: Vec<u128>,
}

/// `N` (feature map, hashing counter) pairs and the coefficient `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountEnsemble {
    num_states: usize,
    num_actions: usize,
    members: Vec<CountMember>,
    alpha: f64,
    ingested: bool,
}

impl CountEnsemble {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        feature: FeatureKind,
        code_bits: usize,
        n_members: usize,
        alpha: f64,
        seed: u64,
    ) -> Result<Self> {
        if n_members == 0 {
            return Err(Error::invalid("count ensemble needs at least one member"));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be non-negative, got {alpha}")));
        }
        let members = (0..n_members as u64)
            .map(|i| {
                let feature = match feature {
                    FeatureKind::OneHot => FeatureMap::one_hot(num_states, num_actions),
                    FeatureKind::NoisyOneHot { rho } => {
                        FeatureMap::noisy_one_hot(num_states, num_actions, rho, derive_seed(seed, 2 * i + 1))
                    }
                };
                Self::member(feature, code_bits, derive_seed(seed, 2 * i))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { num_states, num_actions, members, alpha, ingested: false })
    }

    /// Ensemble from explicit feature maps, one member each.
    pub fn from_features(features: Vec<FeatureMap>, code_bits: usize, alpha: f64, seed: u64) -> Result<Self> {
        let first = features.first().ok_or_else(|| Error::invalid("no feature maps given"))?;
        let (ns, na) = first.pairs();
        if features.iter().any(|f| f.pairs() != (ns, na)) {
            return Err(Error::dim("feature maps disagree on (S, A)"));
        }
        if !(alpha >= 0.0) {
            return Err(Error::invalid("alpha must be non-negative"));
        }
        let members = features
            .into_iter()
            .enumerate()
            .map(|(i, f)| Self::member(f, code_bits, derive_seed(seed, 2 * i as u64)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { num_states: ns, num_actions: na, members, alpha, ingested: false })
    }

    fn member(feature: FeatureMap, code_bits: usize, seed: u64) -> Result<CountMember> {
        let (ns, na) = feature.pairs();
        let counter = HashCounter::new(code_bits, feature.dim(), seed)?;
        let mut codes = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                codes.push(counter.code(&feature.features(s, a))?);
            }
        }
        Ok(CountMember { feature, counter, codes })
    }

    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn code_bits(&self) -> usize {
        self.members[0].counter.code_bits
    }

    /// Feeds every transition's pair through every member.
    pub fn ingest_dataset(&mut self, data: &OfflineDataset) -> Result<()> {
        if self.ingested {
            return Err(Error::invalid("ensemble already ingested a dataset; reset it first"));
        }
        if (data.num_states(), data.num_actions()) != (self.num_states, self.num_actions) {
            return Err(Error::dim(format!(
                "dataset is {}x{}, features expect {}x{}",
                data.num_states(),
                data.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        for m in &mut self.members {
            for t in data.transitions() {
                let code = m.codes[t.state * self.num_actions + t.action];
                m.counter.ingest_code(code);
            }
        }
        self.ingested = true;
        Ok(())
    }

    pub fn reset(&mut self) {
        for m in &mut self.members {
            m.counter.reset();
        }
        self.ingested = false;
    }

    pub fn counter(&self, member: usize) -> Option<&HashCounter> {
        self.members.get(member).map(|m| &m.counter)
    }

    pub fn feature_map(&self, member: usize) -> Option<&FeatureMap> {
        self.members.get(member).map(|m| &m.feature)
    }

    /// `n_i(phi_i(s, a))`.
    pub fn member_count(&self, member: usize, s: usize, a: usize) -> Result<u64> {
        let m = self
            .members
            .get(member)
            .ok_or_else(|| Error::invalid(format!("member {member} out of range (N = {})", self.members.len())))?;
        if s >= self.num_states || a >= self.num_actions {
            return Err(Error::dim(format!("pair ({s},{a}) out of range")));
        }
        Ok(m.counter.count_code(m.codes[s * self.num_actions + a]))
    }

    pub fn member_counts(&self, s: usize, a: usize) -> Vec<u64> {
        let idx = s * self.num_actions + a;
        self.members.iter().map(|m| m.counter.count_code(m.codes[idx])).collect()
    }

    /// Mean and sample standard deviation of member counts.
    pub fn mean_std(&self, s: usize, a: usize) -> (f64, f64) {
        mean_std(&self.member_counts(s, a))
    }

    /// `mean - alpha*std` (LC), `mean` (AVG) or `mean + alpha*std` (UC).
    /// LC values may be negative and are returned as is.
    pub fn estimate_count(&self, s: usize, a: usize, mode: CountMode) -> Result<f64> {
        self.check_mode(mode, self.alpha)?;
        if s >= self.num_states || a >= self.num_actions {
            return Err(Error::dim(format!("pair ({s},{a}) out of range")));
        }
        Ok(self.estimate(s, a, mode, self.alpha))
    }

    /// Whether member `i`'s codes are distinct over the given pairs.
    pub fn is_injective_on(&self, member: usize, pairs: &[(usize, usize)]) -> bool {
        let codes = &self.members[member].codes;
        let mut seen = HashMap::new();
        for &(s, a) in pairs {
            let code = codes[s * self.num_actions + a];
            if let Some(prev) = seen.insert(code, (s, a)) {
                if prev != (s, a) {
                    return false;
                }
            }
        }
        true
    }

    /// Per member, the number of pairs sharing a code with another pair.
    pub fn colliding_pairs(&self) -> Vec<usize> {
        self.members
            .iter()
            .map(|m| {
                let mut freq: HashMap<u128, usize> = HashMap::new();
                for &c in &m.codes {
                    *freq.entry(c).or_insert(0) += 1;
                }
                m.codes.iter().filter(|c| freq[c] > 1).count()
            })
            .collect()
    }
}

impl CountEstimator for CountEnsemble {
    fn dims(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    fn estimate(&self, s: usize, a: usize, mode: CountMode, alpha: f64) -> f64 {
        combine_counts(&self.member_counts(s, a), mode, alpha)
    }

    fn check_mode(&self, mode: CountMode, alpha: f64) -> Result<()> {
        if mode != CountMode::Avg && alpha > 0.0 && self.members.len() < 2 {
            return Err(Error::invalid(format!("{mode} counts with alpha > 0 need at least two members")));
        }
        Ok(())
    }
}

/// Mean and sample standard deviation (`N - 1` denominator, zero for a
/// single member). NaN mean for an empty slice.
pub fn mean_std(counts: &[u64]) -> (f64, f64) {
    let n = counts.len() as f64;
    let mean = counts.iter().map(|&c| c as f64).sum::<f64>() / n;
    if counts.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Combines member counts: `mean - alpha*std` (LC), `mean` (AVG) or
/// `mean + alpha*std` (UC).
pub fn combine_counts(counts: &[u64], mode: CountMode, alpha: f64) -> f64 {
    let (mean, std) = mean_std(counts);
    match mode {
        CountMode::Lc => mean - alpha * std,
        CountMode::Avg => mean,
        CountMode::Uc => mean + alpha * std,
    }
}

/// One audit row per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub state: usize,
    pub action: usize,
    pub true_count: u64,
    pub member_counts: Vec<u64>,
    pub lc: f64,
    pub avg: f64,
    pub uc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountAudit {
    pub rows: Vec<AuditRow>,
    /// Max over pairs of `|n_hat - n|`, per mode in LC, AVG, UC order.
    pub max_abs_error: [f64; 3],
    /// Max over pairs and members of `|n_i - n|`.
    pub max_member_error: u64,
    pub colliding_pairs: Vec<usize>,
    /// Pairs with any member count differing from the true count.
    pub pairs_with_error: usize,
}

impl CountAudit {
    pub fn is_exact(&self) -> bool {
        self.max_member_error == 0
    }

    /// `s,a,true_count,member_0,...,member_{N-1},lc,avg,uc`.
    pub fn to_csv(&self) -> String {
        let n = self.rows.first().map_or(0, |r| r.member_counts.len());
        let mut out = String::from("s,a,true_count");
        for i in 0..n {
            let _ = write!(out, ",member_{i}");
        }
        out.push_str(",lc,avg,uc\n");
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.state, r.action, r.true_count);
            for c in &r.member_counts {
                let _ = write!(out, ",{c}");
            }
            let _ = writeln!(out, ",{:?},{:?},{:?}", r.lc, r.avg, r.uc);
        }
        out
    }
}

/// Compares an ingested ensemble against exact counts.
pub fn count_audit(ensemble: &CountEnsemble, exact: &CountTable) -> Result<CountAudit> {
    if ensemble.dims() != exact.dims() {
        return Err(Error::dim("ensemble and count table disagree on (S, A)"));
    }
    let mut rows = Vec::with_capacity(ensemble.num_states * ensemble.num_actions);
    let mut max_abs_error = [0.0_f64; 3];
    let mut max_member_error = 0u64;
    let mut pairs_with_error = 0;
    for s in 0..ensemble.num_states {
        for a in 0..ensemble.num_actions {
            let n = exact.get(s, a);
            let member_counts = ensemble.member_counts(s, a);
            let worst = member_counts.iter().map(|&c| c.abs_diff(n)).max().unwrap_or(0);
            max_member_error = max_member_error.max(worst);
            if worst > 0 {
                pairs_with_error += 1;
            }
            let est = CountMode::ALL.map(|m| ensemble.estimate(s, a, m, ensemble.alpha));
            for (slot, e) in max_abs_error.iter_mut().zip(est) {
                *slot = slot.max((e - n as f64).abs());
            }
            rows.push(AuditRow { state: s, action: a, true_count: n, member_counts, lc: est[0], avg: est[1], uc: est[2] });
        }
    }
    Ok(CountAudit { rows, max_abs_error, max_member_error, colliding_pairs: ensemble.colliding_pairs(), pairs_with_error })
}
