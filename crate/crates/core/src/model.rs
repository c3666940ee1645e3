//! Maximum-likelihood transition models, bootstrap ensembles and the
//! count-based estimation-error bound.
//!
//! For a tabular model class the MLE of `P(.|s,a)` is the empirical
//! next-state frequency vector of the transitions observed at `(s,a)`.
//! Rows of unobserved pairs carry no distribution; callers that need a
//! complete MDP use [`MleModel::completed_row`], which substitutes a
//! self-loop.

use std::fmt::Write as _;

use rand::Rng;

use crate::dataset::{exact_counts, CountTable, OfflineDataset};
use crate::error::{Error, Result};
use crate::mdp::{total_variation, TabularMdp};
use crate::sampling::seeded;

#[derive(Debug, Clone, PartialEq)]
pub struct MleModel {
    num_states: usize,
    num_actions: usize,
    p_hat: Vec<f64>,
    observed: Vec<bool>,
    source_counts: CountTable,
}

impl MleModel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn is_observed(&self, s: usize, a: usize) -> bool {
        self.observed[s * self.num_actions + a]
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn source_counts(&self) -> &CountTable {
        &self.source_counts
    }

    /// Estimated next-state distribution, `None` when unobserved.
    pub fn row(&self, s: usize, a: usize) -> Option<&[f64]> {
        if !self.is_observed(s, a) {
            return None;
        }
        let start = (s * self.num_actions + a) * self.num_states;
        Some(&self.p_hat[start..start + self.num_states])
    }

    /// Observed row, or a self-loop at `s` for unobserved pairs.
    pub fn completed_row(&self, s: usize, a: usize) -> Vec<f64> {
        match self.row(s, a) {
            Some(r) => r.to_vec(),
            None => self_loop(self.num_states, s),
        }
    }

    /// Log-likelihood of the dataset under this model's rows.
    pub fn log_likelihood(&self, data: &OfflineDataset) -> f64 {
        data.transitions()
            .iter()
            .map(|t| match self.row(t.state, t.action) {
                Some(r) => r[t.next_state].ln(),
                None => f64::NEG_INFINITY,
            })
            .sum()
    }

    /// Complete MDP using the true reward table of `like`.
    pub fn to_mdp(&self, like: &TabularMdp) -> Result<TabularMdp> {
        if like.num_states() != self.num_states || like.num_actions() != self.num_actions {
            return Err(Error::dim("model and MDP disagree on (S, A)"));
        }
        let mut flat = Vec::with_capacity(self.p_hat.len());
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                flat.extend(self.completed_row(s, a));
            }
        }
        like.with_transition(flat)
    }

    /// `s,a,s',p` rows for non-zero entries, then an observed-mask
    /// section of `s,a,observed` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# num_states={}", self.num_states);
        let _ = writeln!(out, "# num_actions={}", self.num_actions);
        let _ = writeln!(out, "# section=transitions");
        out.push_str("s,a,s',p\n");
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                if let Some(row) = self.row(s, a) {
                    for (next, &p) in row.iter().enumerate().filter(|(_, &p)| p > 0.0) {
                        let _ = writeln!(out, "{s},{a},{next},{p:?}");
                    }
                }
            }
        }
        let _ = writeln!(out, "# section=observed");
        out.push_str("s,a,observed\n");
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let _ = writeln!(out, "{s},{a},{}", u8::from(self.is_observed(s, a)));
            }
        }
        out
    }
}

pub(crate) fn self_loop(num_states: usize, s: usize) -> Vec<f64> {
    let mut row = vec![0.0; num_states];
    row[s] = 1.0;
    row
}

/// Empirical-frequency MLE per observed pair.
pub fn fit_mle(data: &OfflineDataset) -> MleModel {
    let (ns, na) = (data.num_states(), data.num_actions());
    let counts = exact_counts(data);
    let mut p_hat = vec![0.0; ns * na * ns];
    for t in data.transitions() {
        p_hat[(t.state * na + t.action) * ns + t.next_state] += 1.0;
    }
    let mut observed = vec![false; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let n = counts.get(s, a);
            if n == 0 {
                continue;
            }
            observed[s * na + a] = true;
            let start = (s * na + a) * ns;
            for p in &mut p_hat[start..start + ns] {
                *p /= n as f64;
            }
        }
    }
    MleModel { num_states: ns, num_actions: na, p_hat, observed, source_counts: counts }
}

/// `N` MLE models, each fit on a bootstrap resample of the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<MleModel>,
    pub seed: u64,
}

impl EnsembleModel {
    pub fn n_members(&self) -> usize {
        self.members.len()
    }

    pub fn num_states(&self) -> usize {
        self.members[0].num_states
    }

    pub fn num_actions(&self) -> usize {
        self.members[0].num_actions
    }

    /// Mean of the members' rows that observed `(s,a)`; `None` if none did.
    pub fn mean_row(&self, s: usize, a: usize) -> Option<Vec<f64>> {
        let mut acc = vec![0.0; self.num_states()];
        let mut k = 0usize;
        for m in &self.members {
            if let Some(row) = m.row(s, a) {
                acc.iter_mut().zip(row).for_each(|(x, p)| *x += p);
                k += 1;
            }
        }
        if k == 0 {
            return None;
        }
        let z: f64 = acc.iter().sum();
        acc.iter_mut().for_each(|x| *x /= z);
        Some(acc)
    }

    /// Mean total variation between member pairs, over rows both members
    /// observed. Zero for single-member ensembles.
    pub fn mean_pairwise_tv(&self) -> f64 {
        let (ns, na) = (self.num_states(), self.num_actions());
        let mut total = 0.0;
        let mut n = 0usize;
        for i in 0..self.members.len() {
            for j in i + 1..self.members.len() {
                for s in 0..ns {
                    for a in 0..na {
                        if let (Some(p), Some(q)) = (self.members[i].row(s, a), self.members[j].row(s, a)) {
                            total += 0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>();
                            n += 1;
                        }
                    }
                }
            }
        }
        if n == 0 {
            0.0
        } else {
            total / n as f64
        }
    }
}

/// Bootstrap ensemble. With `include_plain`, member 0 is fit on the raw
/// dataset and the remaining `N - 1` on resamples.
pub fn fit_ensemble(data: &OfflineDataset, n_members: usize, seed: u64, include_plain: bool) -> Result<EnsembleModel> {
    if n_members == 0 {
        return Err(Error::invalid("ensemble needs at least one member"));
    }
    let mut rng = seeded(seed);
    let n = data.len();
    let mut members = Vec::with_capacity(n_members);
    for i in 0..n_members {
        if i == 0 && include_plain {
            members.push(fit_mle(data));
            continue;
        }
        let idx: Vec<_> = (0..n).map(|_| rng.random_range(0..n.max(1))).collect();
        let resample = if n == 0 {
            data.clone()
        } else {
            OfflineDataset::new(
                data.num_states(),
                data.num_actions(),
                idx.iter().map(|&k| data.transitions()[k]).collect(),
                data.meta().clone(),
            )?
        };
        members.push(fit_mle(&resample));
    }
    Ok(EnsembleModel { members, seed })
}

/// Confidence level and model-class size for the error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBoundConfig {
    pub delta: f64,
    /// `log |M|`. A tabular model class is infinite, so this is a knob.
    pub log_model_class: f64,
}

impl ErrorBoundConfig {
    pub fn new(delta: f64, log_model_class: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !(log_model_class > 0.0) || !log_model_class.is_finite() {
            return Err(Error::invalid(format!("log_model_class must be positive, got {log_model_class}")));
        }
        Ok(Self { delta, log_model_class })
    }

    /// `2 + multiplier * S ln S`.
    pub fn default_log_model_class(num_states: usize, multiplier: f64) -> f64 {
        let s = num_states as f64;
        2.0 + multiplier * s * s.ln()
    }

    /// `log(|M| / delta)`.
    pub fn log_term(&self) -> f64 {
        self.log_model_class + (1.0 / self.delta).ln()
    }
}

/// `min(1, sqrt(2 log(|M|/delta) / n))`, and 1 when `n <= 0`.
pub fn error_bound(n_hat: f64, cfg: &ErrorBoundConfig) -> f64 {
    if n_hat.is_nan() || n_hat <= 0.0 {
        return 1.0;
    }
    (2.0 * cfg.log_term() / n_hat).sqrt().min(1.0)
}

/// Per-pair total variation to the true rows; 1 for unobserved pairs.
pub fn tv_errors(model: &MleModel, truth: &TabularMdp) -> Result<Vec<f64>> {
    if truth.num_states() != model.num_states || truth.num_actions() != model.num_actions {
        return Err(Error::dim("model and MDP disagree on (S, A)"));
    }
    let mut out = Vec::with_capacity(model.num_states * model.num_actions);
    for s in 0..model.num_states {
        for a in 0..model.num_actions {
            out.push(match model.row(s, a) {
                Some(row) => total_variation(row, truth.row(s, a))?,
                None => 1.0,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetMeta, Transition};
    use crate::mdp::PolicyTable;
    use crate::synthetic::random_mdp;

    fn data(ts: &[(usize, usize, usize)], ns: usize, na: usize) -> OfflineDataset {
        let ts = ts.iter().map(|&(s, a, n)| Transition { state: s, action: a, reward: 0.0, next_state: n }).collect();
        OfflineDataset::new(ns, na, ts, DatasetMeta::default()).unwrap()
    }

    #[test]
    fn frequency_rows() {
        let m = fit_mle(&data(&[(0, 0, 1), (0, 0, 1), (0, 0, 2)], 4, 2));
        let row = m.row(0, 0).unwrap();
        assert!((row[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((row[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(row[0] + row[3], 0.0);
        assert!(m.row(0, 1).is_none());
        assert_eq!(m.completed_row(3, 1), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn empty_dataset_is_unobserved() {
        let m = fit_mle(&data(&[], 3, 2));
        assert!(m.observed_mask().iter().all(|&o| !o));
        let e = fit_ensemble(&data(&[], 3, 2), 3, 1, false).unwrap();
        assert_eq!(e.n_members(), 3);
    }

    #[test]
    fn mle_is_a_local_likelihood_maximum() {
        let mdp = random_mdp(4, 2, 0.9, 3).unwrap();
        let d = generate_dataset(&mdp, &PolicyTable::uniform(4, 2), 400, 5, 30).unwrap();
        let m = fit_mle(&d);
        let base = m.log_likelihood(&d);
        // Move mass eps from s'=i to s'=j within one observed row.
        for s in 0..4 {
            for a in 0..2 {
                let Some(row) = m.row(s, a) else { continue };
                for (i, &pi) in row.iter().enumerate() {
                    for j in 0..4 {
                        if i == j || pi < 1e-3 {
                            continue;
                        }
                        for eps in [1e-4, 1e-3] {
                            let mut pert = m.clone();
                            let start = (s * 2 + a) * 4;
                            pert.p_hat[start + i] -= eps;
                            pert.p_hat[start + j] += eps;
                            assert!(pert.log_likelihood(&d) <= base + 1e-12, "({s},{a}) {i}->{j}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn plain_single_member() {
        let mdp = random_mdp(3, 2, 0.9, 1).unwrap();
        let d = generate_dataset(&mdp, &PolicyTable::uniform(3, 2), 100, 2, 20).unwrap();
        let e = fit_ensemble(&d, 1, 9, true).unwrap();
        assert_eq!(e.members[0], fit_mle(&d));
    }

    #[test]
    fn bootstrap_support_is_subset() {
        let d = data(&[(0, 0, 1), (1, 1, 0), (1, 1, 2), (2, 0, 2)], 3, 2);
        let raw = fit_mle(&d);
        let e = fit_ensemble(&d, 8, 4, false).unwrap();
        for m in &e.members {
            for (o, r) in m.observed_mask().iter().zip(raw.observed_mask()) {
                assert!(!o || *r);
            }
        }
        assert_eq!(fit_ensemble(&d, 8, 4, false).unwrap(), e);
    }

    #[test]
    fn bound_values() {
        let cfg = ErrorBoundConfig::new(0.1, 2.0).unwrap();
        assert_eq!(error_bound(0.0, &cfg), 1.0);
        assert_eq!(error_bound(-3.5, &cfg), 1.0);
        assert_eq!(error_bound(1.0, &cfg), 1.0);
        // sqrt(2 * (2 + ln 10) / 100), frozen from an independent
        // 30-digit evaluation: 0.293345703666988983...
        assert!((error_bound(100.0, &cfg) - 0.293_345_703_666_989).abs() < 1e-12);
        assert!(error_bound(1e12, &cfg) < 1e-4);
        assert!(ErrorBoundConfig::new(1.0, 2.0).is_err());
        assert!(ErrorBoundConfig::new(0.1, 0.0).is_err());
    }

    #[test]
    fn tv_conventions() {
        let mdp = random_mdp(3, 2, 0.9, 7).unwrap();
        let m = fit_mle(&data(&[(0, 0, 1)], 3, 2));
        let tv = tv_errors(&m, &mdp).unwrap();
        assert_eq!(tv[1], 1.0);
        assert!((tv[0] - (1.0 - mdp.row(0, 0)[1])).abs() < 1e-12);
    }

    #[test]
    fn csv_lists_rows_and_mask() {
        let m = fit_mle(&data(&[(0, 0, 1), (0, 0, 0)], 2, 2));
        let csv = m.to_csv();
        assert!(csv.contains("0,0,0,0.5\n0,0,1,0.5\n"));
        assert!(csv.contains("1,1,0\n"));
        assert!(csv.contains("0,0,1\n# section") || csv.contains("\n0,0,1\n"));
    }
}
