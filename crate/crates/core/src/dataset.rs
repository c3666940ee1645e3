//! Offline datasets of `(s, a, r, s')` transitions, exact counting,
//! generation from a behavior policy, and the CSV file format.
//!
//! File layout: a block of `# key=value` metadata lines followed by one
//! `s,a,r,s'` transition per line. Rewards are printed with Rust's
//! shortest round-trip formatting, so load(save(d)) == d bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::mdp::{absorbing_states, PolicyTable, TabularMdp};
use crate::sampling::{categorical, seeded};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetMeta {
    pub env_id: String,
    pub seed: u64,
    pub generator: String,
}

/// An immutable, bounds-checked list of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<Transition>,
    meta: DatasetMeta,
}

impl OfflineDataset {
    pub fn new(num_states: usize, num_actions: usize, transitions: Vec<Transition>, meta: DatasetMeta) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("dataset needs positive S and A"));
        }
        for (i, t) in transitions.iter().enumerate() {
            check_bounds(t, num_states, num_actions).map_err(|msg| Error::invalid(format!("transition {i}: {msg}")))?;
        }
        Ok(Self { num_states, num_actions, transitions, meta })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn with_meta(mut self, meta: DatasetMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Subset by transition index, in the given order.
    fn select(&self, idx: &[usize]) -> Self {
        Self {
            num_states: self.num_states,
            num_actions: self.num_actions,
            transitions: idx.iter().map(|&i| self.transitions[i]).collect(),
            meta: self.meta.clone(),
        }
    }
}

fn check_bounds(t: &Transition, num_states: usize, num_actions: usize) -> std::result::Result<(), String> {
    if t.state >= num_states || t.next_state >= num_states {
        return Err(format!("state index out of range (S = {num_states})"));
    }
    if t.action >= num_actions {
        return Err(format!("action {} out of range (A = {num_actions})", t.action));
    }
    if !t.reward.is_finite() {
        return Err("non-finite reward".into());
    }
    Ok(())
}

/// Exact visit counts `n(s,a)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTable {
    num_states: usize,
    num_actions: usize,
    counts: Vec<u64>,
}

impl CountTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, counts: vec![0; num_states * num_actions] }
    }

    pub fn get(&self, s: usize, a: usize) -> u64 {
        self.counts[s * self.num_actions + a]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    /// Pairs never seen in the data.
    pub fn zero_pairs(&self) -> Vec<(usize, usize)> {
        (0..self.num_states)
            .flat_map(|s| (0..self.num_actions).map(move |a| (s, a)))
            .filter(|&(s, a)| self.get(s, a) == 0)
            .collect()
    }
}

pub fn exact_counts(data: &OfflineDataset) -> CountTable {
    let mut table = CountTable::zeros(data.num_states, data.num_actions);
    for t in &data.transitions {
        table.counts[t.state * data.num_actions + t.action] += 1;
    }
    table
}

/// Rolls out `behavior` from `d0` until `n_transitions` are recorded.
///
/// An episode ends after entering an absorbing state or after
/// `episode_cap` steps; the next one starts from a fresh draw of `d0`.
pub fn generate_dataset(
    mdp: &TabularMdp,
    behavior: &PolicyTable,
    n_transitions: usize,
    seed: u64,
    episode_cap: usize,
) -> Result<OfflineDataset> {
    if behavior.num_states() != mdp.num_states() || behavior.num_actions() != mdp.num_actions() {
        return Err(Error::dim("behavior policy does not match the MDP"));
    }
    if episode_cap == 0 {
        return Err(Error::invalid("episode_cap must be positive"));
    }
    let absorbing = absorbing_states(mdp);
    let mut rng = seeded(seed);
    let mut transitions = Vec::with_capacity(n_transitions);
    let mut state = categorical(mdp.initial_dist(), &mut rng);
    let mut steps = 0;
    while transitions.len() < n_transitions {
        let action = categorical(behavior.row(state), &mut rng);
        let next_state = categorical(mdp.row(state, action), &mut rng);
        transitions.push(Transition { state, action, reward: mdp.reward(state, action), next_state });
        steps += 1;
        if absorbing[next_state] || steps >= episode_cap {
            state = categorical(mdp.initial_dist(), &mut rng);
            steps = 0;
        } else {
            state = next_state;
        }
    }
    let meta = DatasetMeta { env_id: String::new(), seed, generator: "policy_rollout".into() };
    OfflineDataset::new(mdp.num_states(), mdp.num_actions(), transitions, meta)
}

/// Uniformly random disjoint split into `(train, heldout)` with
/// `|heldout| = k`. Both sides keep the original relative order.
pub fn split_heldout(data: &OfflineDataset, k: usize, seed: u64) -> Result<(OfflineDataset, OfflineDataset)> {
    if k > data.len() {
        return Err(Error::invalid(format!("cannot hold out {k} of {} transitions", data.len())));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut seeded(seed));
    let mut heldout = idx[..k].to_vec();
    let mut train = idx[k..].to_vec();
    heldout.sort_unstable();
    train.sort_unstable();
    Ok((data.select(&train), data.select(&heldout)))
}

pub fn dataset_to_string(data: &OfflineDataset) -> String {
    let mut out = String::with_capacity(32 * data.len() + 128);
    let m = &data.meta;
    let _ = writeln!(out, "# env_id={}", m.env_id);
    let _ = writeln!(out, "# seed={}", m.seed);
    let _ = writeln!(out, "# generator={}", m.generator);
    let _ = writeln!(out, "# num_states={}", data.num_states);
    let _ = writeln!(out, "# num_actions={}", data.num_actions);
    for t in &data.transitions {
        let _ = writeln!(out, "{},{},{:?},{}", t.state, t.action, t.reward, t.next_state);
    }
    out
}

pub fn save_dataset(data: &OfflineDataset, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, dataset_to_string(data))?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<OfflineDataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn parse_dataset(text: &str) -> Result<OfflineDataset> {
    let mut meta = DatasetMeta::default();
    let mut num_states = None;
    let mut num_actions = None;
    let mut transitions = Vec::new();
    let mut in_header = true;
    let mut dims = (0, 0);
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if !in_header {
                return Err(Error::Parse { line: line_no, msg: "metadata after transitions".into() });
            }
            let (key, value) = rest
                .trim_start()
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: line_no, msg: "expected key=value".into() })?;
            let parse_int = |v: &str| {
                v.trim().parse::<u64>().map_err(|e| Error::Parse { line: line_no, msg: format!("{key}: {e}") })
            };
            match key.trim() {
                "env_id" => meta.env_id = value.to_string(),
                "generator" => meta.generator = value.to_string(),
                "seed" => meta.seed = parse_int(value)?,
                "num_states" => num_states = Some(parse_int(value)? as usize),
                "num_actions" => num_actions = Some(parse_int(value)? as usize),
                _ => {}
            }
            continue;
        }
        if in_header {
            in_header = false;
            dims = match (num_states, num_actions) {
                (Some(s), Some(a)) if s > 0 && a > 0 => (s, a),
                _ => {
                    return Err(Error::Parse { line: line_no, msg: "header must declare positive num_states and num_actions".into() })
                }
            };
        }
        let t = parse_transition(line).map_err(|msg| Error::Parse { line: line_no, msg })?;
        check_bounds(&t, dims.0, dims.1).map_err(|msg| Error::Validation { line: line_no, msg })?;
        transitions.push(t);
    }
    let (s, a) = if in_header {
        match (num_states, num_actions) {
            (Some(s), Some(a)) if s > 0 && a > 0 => (s, a),
            _ => return Err(Error::Parse { line: 1, msg: "header must declare positive num_states and num_actions".into() }),
        }
    } else {
        dims
    };
    OfflineDataset::new(s, a, transitions, meta)
}

fn parse_transition(line: &str) -> std::result::Result<Transition, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 fields s,a,r,s' but found {}", fields.len()));
    }
    let idx = |f: &str, name: &str| f.parse::<usize>().map_err(|e| format!("{name}: {e}"));
    Ok(Transition {
        state: idx(fields[0], "s")?,
        action: idx(fields[1], "a")?,
        reward: fields[2].parse::<f64>().map_err(|e| format!("r: {e}"))?,
        next_state: idx(fields[3], "s'")?,
    })
}
