//! Markov chain abstraction.
//!
//! A chain is either [`FiniteChain`], which stores every transition row and is
//! checked for stochastic rows and strong connectivity when built, or a
//! countable chain backed by a [`CountableModel`] that produces rows lazily.
//! Countable chains are assumed irreducible; nothing enumerates their state
//! space.

mod builders;
mod graph;
mod io;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builders::{
    build_clique, build_clique_cycle, build_magnet, build_mm1, build_pagerank,
    build_personalized_pagerank, Mm1,
};
pub use graph::{gen_config_model, Adjacency};
pub use io::{parse_adjacency, parse_chain_file, write_chain_file};

/// Row sums must match 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u64);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u64> for StateId {
    fn from(v: u64) -> Self {
        StateId(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub entries: Vec<(StateId, f64)>,
}

impl TransitionRow {
    pub fn new(entries: Vec<(StateId, f64)>) -> Self {
        TransitionRow { entries }
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    pub fn prob(&self, target: StateId) -> f64 {
        self.entries
            .iter()
            .filter(|&&(t, _)| t == target)
            .map(|&(_, p)| p)
            .sum()
    }

    /// Picks the target whose cumulative interval contains `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> StateId {
        let mut acc = 0.0;
        for &(t, p) in &self.entries {
            acc += p;
            if u < acc {
                return t;
            }
        }
        // u landed in the rounding gap above the last cumulative value
        self.entries
            .iter()
            .rev()
            .find(|&&(_, p)| p > 0.0)
            .map(|&(t, _)| t)
            .expect("row has no positive entry")
    }
}

/// A chain whose state space is infinite or too large to store. Rows are
/// produced on demand.
pub trait CountableModel: Send + Sync + fmt::Debug {
    fn row(&self, s: StateId) -> Result<TransitionRow>;

    /// Next state given a uniform draw `u ∈ [0, 1)`.
    fn step_with(&self, s: StateId, u: f64) -> Result<StateId> {
        Ok(self.row(s)?.pick(u))
    }

    fn name(&self) -> String;

    /// A finite chain agreeing with this one except on states carrying at
    /// most `boundary_mass` stationary probability, with its state count.
    fn truncate(&self, boundary_mass: f64) -> Option<Result<(FiniteChain, usize)>> {
        let _ = boundary_mass;
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Keys {
    /// States `base, base+1, …, base+n-1`.
    Range { base: u64, n: usize },
    Sparse { keys: Vec<StateId>, index: HashMap<StateId, usize> },
}

/// Finite chain with rows stored in compressed form for sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteChain {
    keys: Keys,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl FiniteChain {
    /// Builds a chain on states `base..base+rows.len()` and rejects it if
    /// [`validate_finite`] reports anything.
    pub fn from_rows(base: u64, rows: Vec<TransitionRow>) -> Result<Self> {
        let chain = Self::from_rows_unchecked(base, rows)?;
        chain.ensure_valid()?;
        Ok(chain)
    }

    /// Builds a chain over an explicit list of keys, in index order.
    pub fn from_keyed_rows(keys: Vec<StateId>, rows: Vec<TransitionRow>) -> Result<Self> {
        if keys.len() != rows.len() {
            return Err(Error::Construction(format!(
                "{} keys for {} rows",
                keys.len(),
                rows.len()
            )));
        }
        let index: HashMap<StateId, usize> =
            keys.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        if index.len() != keys.len() {
            return Err(Error::Construction("duplicate state keys".into()));
        }
        let chain = Self::assemble(Keys::Sparse { keys, index }, rows)?;
        chain.ensure_valid()?;
        Ok(chain)
    }

    /// Builds without the stochasticity/irreducibility check, so that
    /// [`validate`] can report on malformed input. Targets must still be
    /// states of the chain.
    pub fn from_rows_unchecked(base: u64, rows: Vec<TransitionRow>) -> Result<Self> {
        let n = rows.len();
        Self::assemble(Keys::Range { base, n }, rows)
    }

    fn assemble(keys: Keys, rows: Vec<TransitionRow>) -> Result<Self> {
        let mut chain = FiniteChain {
            keys,
            offsets: Vec::with_capacity(rows.len() + 1),
            targets: Vec::new(),
            probs: Vec::new(),
            cumulative: Vec::new(),
        };
        chain.offsets.push(0);
        for (r, row) in rows.iter().enumerate() {
            let mut acc = 0.0;
            for &(t, p) in &row.entries {
                let idx = chain.index_of(t).ok_or_else(|| {
                    Error::Construction(format!("row {r} targets unknown state {t}"))
                })?;
                acc += p;
                chain.targets.push(idx);
                chain.probs.push(p);
                chain.cumulative.push(acc);
            }
            chain.offsets.push(chain.targets.len());
        }
        if chain.offsets.len() < 2 {
            return Err(Error::Construction("chain has no states".into()));
        }
        Ok(chain)
    }

    fn ensure_valid(&self) -> Result<()> {
        let report = validate_finite(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::Construction(report.to_string()))
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn key(&self, idx: usize) -> StateId {
        match &self.keys {
            Keys::Range { base, .. } => StateId(base + idx as u64),
            Keys::Sparse { keys, .. } => keys[idx],
        }
    }

    pub fn keys(&self) -> Vec<StateId> {
        (0..self.len()).map(|i| self.key(i)).collect()
    }

    pub fn index_of(&self, s: StateId) -> Option<usize> {
        match &self.keys {
            Keys::Range { base, n } => {
                let off = s.0.checked_sub(*base)?;
                (off < *n as u64).then_some(off as usize)
            }
            Keys::Sparse { index, .. } => index.get(&s).copied(),
        }
    }

    /// Sparse row by index: `(target index, probability)` pairs.
    pub fn row_entries(&self, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[idx], self.offsets[idx + 1]);
        self.targets[a..b]
            .iter()
            .copied()
            .zip(self.probs[a..b].iter().copied())
    }

    pub fn row(&self, idx: usize) -> TransitionRow {
        TransitionRow::new(self.row_entries(idx).map(|(t, p)| (self.key(t), p)).collect())
    }

    /// Dense row-major transition matrix.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.len();
        let mut m = vec![0.0; n * n];
        for r in 0..n {
            for (c, p) in self.row_entries(r) {
                m[r * n + c] += p;
            }
        }
        m
    }

    /// Next state index given a uniform draw.
    #[inline]
    pub fn step_index(&self, idx: usize, u: f64) -> usize {
        let (a, b) = (self.offsets[idx], self.offsets[idx + 1]);
        let cum = &self.cumulative[a..b];
        let k = cum.partition_point(|&c| c <= u);
        if k < cum.len() {
            self.targets[a + k]
        } else {
            // rounding gap: fall back to the last positive entry
            (a..b)
                .rev()
                .find(|&e| self.probs[e] > 0.0)
                .map(|e| self.targets[e])
                .unwrap_or(self.targets[b - 1])
        }
    }
}

/// Shared handle to either kind of chain. Cloning is cheap and handles are
/// safe to share across sampling threads.
#[derive(Clone, Debug)]
pub enum ChainHandle {
    Finite(Arc<FiniteChain>),
    Countable(Arc<dyn CountableModel>),
}

impl From<FiniteChain> for ChainHandle {
    fn from(c: FiniteChain) -> Self {
        ChainHandle::Finite(Arc::new(c))
    }
}

impl ChainHandle {
    pub fn countable(model: impl CountableModel + 'static) -> Self {
        ChainHandle::Countable(Arc::new(model))
    }

    pub fn as_finite(&self) -> Option<&FiniteChain> {
        match self {
            ChainHandle::Finite(c) => Some(c),
            ChainHandle::Countable(_) => None,
        }
    }

    pub fn finite(&self) -> Result<&FiniteChain> {
        self.as_finite().ok_or(Error::NotFinite)
    }

    pub fn num_states(&self) -> Option<usize> {
        self.as_finite().map(FiniteChain::len)
    }

    pub fn contains(&self, s: StateId) -> bool {
        match self {
            ChainHandle::Finite(c) => c.index_of(s).is_some(),
            ChainHandle::Countable(m) => m.row(s).is_ok(),
        }
    }

    pub fn row(&self, s: StateId) -> Result<TransitionRow> {
        match self {
            ChainHandle::Finite(c) => {
                let idx = c.index_of(s).ok_or(Error::InvalidState(s))?;
                Ok(c.row(idx))
            }
            ChainHandle::Countable(m) => m.row(s),
        }
    }

    #[inline]
    pub fn step_with(&self, s: StateId, u: f64) -> Result<StateId> {
        match self {
            ChainHandle::Finite(c) => {
                let idx = c.index_of(s).ok_or(Error::InvalidState(s))?;
                Ok(c.key(c.step_index(idx, u)))
            }
            ChainHandle::Countable(m) => m.step_with(s, u),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ChainHandle::Finite(c) => format!("finite chain with {} states", c.len()),
            ChainHandle::Countable(m) => m.name(),
        }
    }
}

/// Samples the successor of `s`, consuming exactly one uniform draw.
#[inline]
pub fn step<R: Rng + ?Sized>(chain: &ChainHandle, s: StateId, rng: &mut R) -> Result<StateId> {
    let u: f64 = rng.random();
    chain.step_with(s, u)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    RowSum { row: StateId, sum: f64, deficit: f64 },
    NegativeProbability { row: StateId, target: StateId, prob: f64 },
    DuplicateTarget { row: StateId, target: StateId },
    NotStronglyConnected { unreachable_from_first: usize, cannot_reach_first: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum { row, sum, deficit } => {
                write!(f, "row {row}: row sum {sum} (deficit {deficit:e})")
            }
            Violation::NegativeProbability { row, target, prob } => {
                write!(f, "row {row}: negative probability {prob} to {target}")
            }
            Violation::DuplicateTarget { row, target } => {
                write!(f, "row {row}: duplicate target {target}")
            }
            Violation::NotStronglyConnected { unreachable_from_first, cannot_reach_first } => write!(
                f,
                "not strongly connected ({unreachable_from_first} states unreachable, \
                 {cannot_reach_first} cannot return)"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    /// Number of rows inspected (all rows for finite chains, a frontier for
    /// countable ones).
    pub rows_checked: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid ({} rows checked)", self.rows_checked);
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

fn check_row(row_key: StateId, row: &TransitionRow, out: &mut Vec<Violation>) {
    let mut seen = std::collections::HashSet::new();
    for &(t, p) in &row.entries {
        if p < 0.0 {
            out.push(Violation::NegativeProbability { row: row_key, target: t, prob: p });
        }
        if !seen.insert(t) {
            out.push(Violation::DuplicateTarget { row: row_key, target: t });
        }
    }
    let sum = row.sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        out.push(Violation::RowSum { row: row_key, sum, deficit: 1.0 - sum });
    }
}

/// Report-style validation; never fails.
pub fn validate(chain: &ChainHandle) -> ValidationReport {
    match chain {
        ChainHandle::Finite(c) => validate_finite(c),
        ChainHandle::Countable(m) => validate_countable(m.as_ref(), StateId(0), 256),
    }
}

pub fn validate_finite(chain: &FiniteChain) -> ValidationReport {
    let n = chain.len();
    let mut violations = Vec::new();
    for r in 0..n {
        check_row(chain.key(r), &chain.row(r), &mut violations);
    }
    let (fwd, bwd) = reachability(chain);
    let unreachable = fwd.iter().filter(|&&x| !x).count();
    let stuck = bwd.iter().filter(|&&x| !x).count();
    if unreachable > 0 || stuck > 0 {
        violations.push(Violation::NotStronglyConnected {
            unreachable_from_first: unreachable,
            cannot_reach_first: stuck,
        });
    }
    ValidationReport { violations, rows_checked: n }
}

/// Checks rows of up to `limit` states reachable from `root`. Irreducibility
/// of a countable chain cannot be decided and is not checked.
pub fn validate_countable(model: &dyn CountableModel, root: StateId, limit: usize) -> ValidationReport {
    let mut violations = Vec::new();
    let mut seen = std::collections::HashSet::from([root]);
    let mut queue = VecDeque::from([root]);
    let mut checked = 0;
    while let Some(s) = queue.pop_front() {
        if checked >= limit {
            break;
        }
        checked += 1;
        match model.row(s) {
            Ok(row) => {
                check_row(s, &row, &mut violations);
                for &(t, p) in &row.entries {
                    if p > 0.0 && seen.insert(t) {
                        queue.push_back(t);
                    }
                }
            }
            Err(_) => continue,
        }
    }
    ValidationReport { violations, rows_checked: checked }
}

/// Forward and backward reachability from index 0 over positive entries.
fn reachability(chain: &FiniteChain) -> (Vec<bool>, Vec<bool>) {
    let n = chain.len();
    let mut rev: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for (c, p) in chain.row_entries(r) {
            if p > 0.0 {
                rev[c].push(r);
            }
        }
    }
    let bfs = |adj: &dyn Fn(usize) -> Vec<usize>| {
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            for v in adj(u) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    };
    let fwd = bfs(&|u| chain.row_entries(u).filter(|&(_, p)| p > 0.0).map(|(c, _)| c).collect());
    let bwd = bfs(&|u| rev[u].clone());
    (fwd, bwd)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn row(entries: &[(u64, f64)]) -> TransitionRow {
        TransitionRow::new(entries.iter().map(|&(t, p)| (StateId(t), p)).collect())
    }

    #[test]
    fn symmetric_two_state_is_valid() {
        let c = FiniteChain::from_rows(0, vec![row(&[(0, 0.5), (1, 0.5)]), row(&[(0, 0.5), (1, 0.5)])])
            .unwrap();
        assert!(validate(&c.into()).is_valid());
    }

    #[test]
    fn short_row_is_reported() {
        let c = FiniteChain::from_rows_unchecked(0, vec![row(&[(0, 0.5), (1, 0.4)]), row(&[(0, 1.0)])])
            .unwrap();
        let report = validate(&c.into());
        assert!(report.to_string().contains("row sum 0.9"), "{report}");
        match &report.violations[0] {
            Violation::RowSum { row, deficit, .. } => {
                assert_eq!(*row, StateId(0));
                assert!((deficit - 0.1).abs() < 1e-12);
            }
            v => panic!("unexpected {v:?}"),
        }
    }

    #[test]
    fn absorbing_state_breaks_irreducibility() {
        let rows = vec![row(&[(0, 0.5), (1, 0.5)]), row(&[(1, 1.0)])];
        let c = FiniteChain::from_rows_unchecked(0, rows.clone()).unwrap();
        let report = validate(&c.into());
        assert!(report.to_string().contains("not strongly connected"));
        assert!(FiniteChain::from_rows(0, rows).is_err());
    }

    #[test]
    fn negative_entry_is_reported() {
        let c = FiniteChain::from_rows_unchecked(0, vec![row(&[(0, 1.2), (1, -0.2)]), row(&[(0, 1.0)])])
            .unwrap();
        let report = validate(&c.into());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NegativeProbability { .. })));
    }

    #[test]
    fn unknown_target_is_a_construction_error() {
        assert!(FiniteChain::from_rows_unchecked(0, vec![row(&[(3, 1.0)])]).is_err());
    }

    #[test]
    fn degenerate_row_always_steps_to_target() {
        let c: ChainHandle = FiniteChain::from_rows(0, vec![row(&[(1, 1.0)]), row(&[(0, 1.0)])])
            .unwrap()
            .into();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert_eq!(step(&c, StateId(0), &mut rng).unwrap(), StateId(1));
        }
    }

    #[test]
    fn invalid_state_is_rejected() {
        let c: ChainHandle = build_clique(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(step(&c, StateId(9), &mut rng), Err(Error::InvalidState(_))));
    }

    #[test]
    fn two_state_step_frequency() {
        let c: ChainHandle =
            FiniteChain::from_rows(0, vec![row(&[(0, 0.5), (1, 0.5)]), row(&[(0, 0.5), (1, 0.5)])])
                .unwrap()
                .into();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let ones = (0..draws)
            .filter(|_| step(&c, StateId(0), &mut rng).unwrap() == StateId(1))
            .count();
        let freq = ones as f64 / draws as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn mm1_up_fraction_from_zero() {
        let c = build_mm1(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 100_000;
        let ups = (0..draws)
            .filter(|_| step(&c, StateId(0), &mut rng).unwrap() == StateId(1))
            .count();
        let freq = ups as f64 / draws as f64;
        assert!((freq - 0.3).abs() < 0.01, "{freq}");
    }

    /// Every row probability is reproduced within four standard errors.
    #[test]
    fn step_matches_every_row_probability() {
        let chains = [
            build_magnet(0.3, 0.3, 5, 9).unwrap(),
            build_clique_cycle(8, 4, 0.2).unwrap(),
            build_pagerank(&Adjacency::new(vec![vec![1, 2], vec![2], vec![0, 1]]).unwrap(), 0.15)
                .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 100_000usize;
        for chain in &chains {
            let c = chain.as_finite().unwrap();
            for idx in 0..c.len() {
                let mut counts = vec![0usize; c.len()];
                for _ in 0..draws {
                    counts[c.step_index(idx, rand::Rng::random(&mut rng))] += 1;
                }
                let dense = c.dense();
                for (j, &count) in counts.iter().enumerate() {
                    let p = dense[idx * c.len() + j];
                    let se = (p * (1.0 - p) / draws as f64).sqrt();
                    let freq = count as f64 / draws as f64;
                    assert!((freq - p).abs() <= 4.0 * se + 1e-12, "row {idx} col {j}: {freq} vs {p}");
                }
            }
        }
    }

    #[test]
    fn sparse_keys_map_back() {
        let keys = vec![StateId(10), StateId(4)];
        let c = FiniteChain::from_keyed_rows(keys, vec![row(&[(4, 1.0)]), row(&[(10, 1.0)])]).unwrap();
        assert_eq!(c.index_of(StateId(4)), Some(1));
        assert_eq!(c.key(0), StateId(10));
        assert_eq!(c.step_index(0, 0.3), 1);
    }
}
