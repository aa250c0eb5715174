//! Truncated return-walk sampling.
//!
//! A walk starts at the anchor and stops at its first return or after
//! `theta` steps, whichever comes first. Observer visits are counted over
//! steps `1..=length`, so the returning step counts and the start does not.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Adjacency, ChainHandle, FiniteChain, StateId};
use crate::error::{invalid, Error, Result};
use crate::rng::substream;

/// Which states to track visits for.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum ObserverSet {
    #[default]
    None,
    Listed(Vec<StateId>),
    /// Every state of a finite chain, in index order.
    All,
}

impl ObserverSet {
    /// Concrete observer list for `chain`.
    pub fn resolve(&self, chain: &ChainHandle) -> Result<Vec<StateId>> {
        match self {
            ObserverSet::None => Ok(Vec::new()),
            ObserverSet::Listed(v) => {
                let mut seen = std::collections::HashSet::new();
                for &s in v {
                    if !chain.contains(s) {
                        return Err(Error::InvalidState(s));
                    }
                    if !seen.insert(s) {
                        return Err(invalid(format!("observer {s} listed twice")));
                    }
                }
                Ok(v.clone())
            }
            ObserverSet::All => Ok(chain
                .as_finite()
                .ok_or_else(|| invalid("observer set `all` needs a finite chain"))?
                .keys()),
        }
    }
}

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum Parallelism {
    #[default]
    Sequential,
    /// Spread samples over the current rayon pool.
    Rayon,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WalkSample {
    pub length: u64,
    pub truncated: bool,
    pub visits: BTreeMap<StateId, u64>,
}

/// Aggregates of one batch of walks. All sums are integers so batches merge
/// exactly regardless of order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchStats {
    pub n: u64,
    pub theta: u64,
    /// Sum of walk lengths, which is also the number of steps simulated.
    pub total_steps: u64,
    pub truncated: u64,
    pub observers: Vec<StateId>,
    pub visit_sums: Vec<u64>,
    pub t_hat: f64,
    pub p_hat: f64,
    pub f_hat: Vec<f64>,
}

impl BatchStats {
    pub(crate) fn from_sums(
        n: u64,
        theta: u64,
        total_steps: u64,
        truncated: u64,
        observers: Vec<StateId>,
        visit_sums: Vec<u64>,
    ) -> Self {
        let nf = n as f64;
        BatchStats {
            n,
            theta,
            total_steps,
            truncated,
            t_hat: total_steps as f64 / nf,
            p_hat: truncated as f64 / nf,
            f_hat: visit_sums.iter().map(|&v| v as f64 / nf).collect(),
            observers,
            visit_sums,
        }
    }

    /// Fraction of walks that returned, from the integer counts.
    pub fn return_fraction(&self) -> f64 {
        (self.n - self.truncated) as f64 / self.n as f64
    }

    pub fn f_hat_of(&self, s: StateId) -> Option<f64> {
        self.observers.iter().position(|&o| o == s).map(|k| self.f_hat[k])
    }
}

/// Prepared walk: the anchor and observer slots resolved against the chain.
pub(crate) enum Walker<'a> {
    Finite {
        chain: &'a FiniteChain,
        anchor: usize,
        slot: Vec<u32>,
    },
    Countable {
        chain: &'a ChainHandle,
        anchor: StateId,
        slot: HashMap<StateId, usize>,
    },
}

const NO_SLOT: u32 = u32::MAX;

impl<'a> Walker<'a> {
    pub(crate) fn new(chain: &'a ChainHandle, anchor: StateId, observers: &[StateId]) -> Result<Self> {
        match chain {
            ChainHandle::Finite(c) => {
                let anchor = c.index_of(anchor).ok_or(Error::InvalidState(anchor))?;
                let mut slot = vec![NO_SLOT; c.len()];
                for (k, &o) in observers.iter().enumerate() {
                    slot[c.index_of(o).ok_or(Error::InvalidState(o))?] = k as u32;
                }
                Ok(Walker::Finite { chain: c, anchor, slot })
            }
            ChainHandle::Countable(_) => {
                if !chain.contains(anchor) {
                    return Err(Error::InvalidState(anchor));
                }
                let slot = observers.iter().enumerate().map(|(k, &o)| (o, k)).collect();
                Ok(Walker::Countable { chain, anchor, slot })
            }
        }
    }

    /// Runs one walk, adding observer visits into `visits`. Returns the
    /// length and whether the walk was truncated.
    pub(crate) fn walk<R: Rng + ?Sized>(&self, theta: u64, rng: &mut R, visits: &mut [u64]) -> Result<(u64, bool)> {
        match self {
            Walker::Finite { chain, anchor, slot } => {
                let mut cur = *anchor;
                for r in 1..=theta {
                    cur = chain.step_index(cur, rng.random());
                    let s = slot[cur];
                    if s != NO_SLOT {
                        visits[s as usize] += 1;
                    }
                    if cur == *anchor {
                        return Ok((r, false));
                    }
                }
                Ok((theta, true))
            }
            Walker::Countable { chain, anchor, slot } => {
                let mut cur = *anchor;
                for r in 1..=theta {
                    cur = chain.step_with(cur, rng.random())?;
                    if let Some(&s) = slot.get(&cur) {
                        visits[s] += 1;
                    }
                    if cur == *anchor {
                        return Ok((r, false));
                    }
                }
                Ok((theta, true))
            }
        }
    }
}

/// One truncated return walk.
pub fn sample_return<R: Rng + ?Sized>(
    chain: &ChainHandle,
    anchor: StateId,
    theta: u64,
    observers: &[StateId],
    rng: &mut R,
) -> Result<WalkSample> {
    if theta == 0 {
        return Err(invalid("theta must be at least 1"));
    }
    let walker = Walker::new(chain, anchor, observers)?;
    let mut visits = vec![0; observers.len()];
    let (length, truncated) = walker.walk(theta, rng, &mut visits)?;
    Ok(WalkSample {
        length,
        truncated,
        visits: observers.iter().copied().zip(visits).collect(),
    })
}

/// Where the randomness of a batch comes from: sample `k` of iteration
/// `iteration` always uses substream `(seed, iteration, k)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Substreams {
    pub seed: u64,
    pub iteration: u64,
}

#[derive(Clone)]
struct Partial {
    steps: u64,
    truncated: u64,
    visits: Vec<u64>,
}

impl Partial {
    fn new(k: usize) -> Self {
        Partial { steps: 0, truncated: 0, visits: vec![0; k] }
    }

    fn merge(mut self, other: Partial) -> Partial {
        self.steps += other.steps;
        self.truncated += other.truncated;
        for (a, b) in self.visits.iter_mut().zip(other.visits) {
            *a += b;
        }
        self
    }
}

const CHUNK: u64 = 64;

/// `n` independent truncated walks from `anchor`.
pub fn sample_batch(
    chain: &ChainHandle,
    anchor: StateId,
    theta: u64,
    n: u64,
    observers: &[StateId],
    streams: Substreams,
    parallelism: Parallelism,
) -> Result<BatchStats> {
    if theta == 0 {
        return Err(invalid("theta must be at least 1"));
    }
    if n == 0 {
        return Err(invalid("batch size must be at least 1"));
    }
    let walker = Walker::new(chain, anchor, observers)?;
    let k = observers.len();
    let run = |range: std::ops::Range<u64>| -> Result<Partial> {
        let mut acc = Partial::new(k);
        for idx in range {
            let mut rng = substream(streams.seed, streams.iteration, idx);
            let (len, trunc) = walker.walk(theta, &mut rng, &mut acc.visits)?;
            acc.steps += len;
            acc.truncated += trunc as u64;
        }
        Ok(acc)
    };
    let total = match parallelism {
        Parallelism::Sequential => run(0..n)?,
        Parallelism::Rayon => (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| run(c * CHUNK..((c + 1) * CHUNK).min(n)))
            .try_reduce(|| Partial::new(k), |a, b| Ok(a.merge(b)))?,
    };
    Ok(BatchStats::from_sums(n, theta, total.steps, total.truncated, observers.to_vec(), total.visits))
}

/// Node where a geometric-length walk on `D^-1 A` from `x` stops. Each step
/// first stops with probability `beta`, otherwise moves to a uniform
/// out-neighbor.
pub fn geometric_walk_sample<R: Rng + ?Sized>(adj: &Adjacency, x: usize, beta: f64, rng: &mut R) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid(format!("beta {beta} outside (0, 1]")));
    }
    if x >= adj.len() {
        return Err(Error::InvalidState(StateId(x as u64)));
    }
    let mut cur = x;
    loop {
        if rng.random::<f64>() < beta {
            return Ok(cur);
        }
        let out = adj.targets(cur);
        cur = out[rng.random_range(0..out.len())];
    }
}

/// Fraction of steps spent at `x` along one long walk from `x`, recorded
/// every `checkpoint` steps.
pub fn long_walk_frequency_trace<R: Rng + ?Sized>(
    chain: &ChainHandle,
    x: StateId,
    total_steps: u64,
    checkpoint: u64,
    rng: &mut R,
) -> Result<Vec<(u64, f64)>> {
    if checkpoint == 0 || total_steps % checkpoint != 0 {
        return Err(invalid("checkpoint must divide total_steps"));
    }
    let mut trace = Vec::with_capacity((total_steps / checkpoint) as usize);
    let mut hits = 0u64;
    match chain {
        ChainHandle::Finite(c) => {
            let target = c.index_of(x).ok_or(Error::InvalidState(x))?;
            let mut cur = target;
            for s in 1..=total_steps {
                cur = c.step_index(cur, rng.random());
                hits += (cur == target) as u64;
                if s % checkpoint == 0 {
                    trace.push((s, hits as f64 / s as f64));
                }
            }
        }
        ChainHandle::Countable(_) => {
            let mut cur = x;
            for s in 1..=total_steps {
                cur = chain.step_with(cur, rng.random())?;
                hits += (cur == x) as u64;
                if s % checkpoint == 0 {
                    trace.push((s, hits as f64 / s as f64));
                }
            }
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_clique, build_mm1, build_personalized_pagerank, FiniteChain, TransitionRow};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state() -> ChainHandle {
        let row = TransitionRow::new(vec![(StateId(0), 0.5), (StateId(1), 0.5)]);
        FiniteChain::from_rows(0, vec![row.clone(), row]).unwrap().into()
    }

    fn self_loop() -> ChainHandle {
        FiniteChain::from_rows(0, vec![TransitionRow::new(vec![(StateId(0), 1.0)])]).unwrap().into()
    }

    const S: Substreams = Substreams { seed: 1, iteration: 1 };

    #[test]
    fn self_loop_returns_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = sample_return(&self_loop(), StateId(0), 5, &[StateId(0)], &mut rng).unwrap();
        assert_eq!((w.length, w.truncated), (1, false));
        assert_eq!(w.visits[&StateId(0)], 1);
        let b = sample_batch(&self_loop(), StateId(0), 5, 1, &[], S, Parallelism::Sequential).unwrap();
        assert_eq!((b.t_hat, b.p_hat), (1.0, 0.0));
    }

    #[test]
    fn two_state_theta_two_distribution() {
        let c = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 100_000;
        let (mut ones, mut truncs) = (0, 0);
        for _ in 0..draws {
            let w = sample_return(&c, StateId(0), 2, &[StateId(0), StateId(1)], &mut rng).unwrap();
            assert!(w.length == 1 || w.length == 2);
            assert_eq!(w.visits[&StateId(0)], 1 - w.truncated as u64);
            ones += (w.length == 1) as u32;
            truncs += w.truncated as u32;
        }
        assert!((ones as f64 / draws as f64 - 0.5).abs() < 0.01);
        assert!((truncs as f64 / draws as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn batch_converges_on_two_state() {
        let b = sample_batch(&two_state(), StateId(0), 2, 200_000, &[StateId(0)], S, Parallelism::Rayon).unwrap();
        assert!((b.t_hat - 1.5).abs() < 0.01, "{}", b.t_hat);
        assert!((b.p_hat - 0.25).abs() < 0.01, "{}", b.p_hat);
    }

    #[test]
    fn sequential_and_parallel_batches_match() {
        let c = build_clique(12).unwrap();
        let obs: Vec<StateId> = (0..12).map(StateId).collect();
        for n in [1, 63, 64, 65, 1000] {
            let a = sample_batch(&c, StateId(3), 8, n, &obs, S, Parallelism::Sequential).unwrap();
            let b = sample_batch(&c, StateId(3), 8, n, &obs, S, Parallelism::Rayon).unwrap();
            assert_eq!(a, b);
        }
        let m = build_mm1(0.3).unwrap();
        let a = sample_batch(&m, StateId(0), 32, 500, &[StateId(2)], S, Parallelism::Sequential).unwrap();
        let b = sample_batch(&m, StateId(0), 32, 500, &[StateId(2)], S, Parallelism::Rayon).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_invariants() {
        let c = build_clique(7).unwrap();
        let obs: Vec<StateId> = (0..7).map(StateId).collect();
        for theta in [1, 2, 4, 16] {
            let b = sample_batch(&c, StateId(2), theta, 300, &obs, S, Parallelism::Sequential).unwrap();
            assert!(b.p_hat * theta as f64 <= b.t_hat && b.t_hat <= theta as f64);
            assert_eq!(b.f_hat_of(StateId(2)), Some(b.return_fraction()));
            assert!((b.return_fraction() - (1.0 - b.p_hat)).abs() <= 1e-15);
            assert!(b.f_hat.iter().all(|&f| f <= b.t_hat));
        }
    }

    #[test]
    fn invalid_inputs() {
        let c = two_state();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_return(&c, StateId(0), 0, &[], &mut rng).is_err());
        assert!(sample_return(&c, StateId(2), 3, &[], &mut rng).is_err());
        assert!(sample_batch(&c, StateId(0), 3, 0, &[], S, Parallelism::Sequential).is_err());
        assert!(ObserverSet::All.resolve(&build_mm1(0.3).unwrap()).is_err());
        assert!(ObserverSet::Listed(vec![StateId(0), StateId(0)]).resolve(&c).is_err());
    }

    #[test]
    fn geometric_walk_full_stop_returns_start() {
        let adj = Adjacency::new(vec![vec![1], vec![0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(geometric_walk_sample(&adj, 1, 1.0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn geometric_walk_two_cycle_parity() {
        let adj = Adjacency::new(vec![vec![1], vec![0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let home = (0..draws)
            .filter(|_| geometric_walk_sample(&adj, 0, 0.5, &mut rng).unwrap() == 0)
            .count();
        assert!((home as f64 / draws as f64 - 2.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn geometric_walk_matches_personalized_pagerank() {
        let adj = crate::chain::gen_config_model(10, 1.5, 1, 3).unwrap();
        let beta = 0.3;
        let chain = build_personalized_pagerank(&adj, beta, StateId(0)).unwrap();
        let pi = crate::oracle::stationary_exact(chain.as_finite().unwrap()).unwrap();
        let f = chain.as_finite().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let draws = 100_000;
        let mut counts = vec![0usize; adj.len()];
        for _ in 0..draws {
            counts[geometric_walk_sample(&adj, 0, beta, &mut rng).unwrap()] += 1;
        }
        let mut tv = 0.0;
        for (v, &c) in counts.iter().enumerate() {
            let p = f.index_of(StateId(v as u64)).map_or(0.0, |i| pi.pi[i]);
            tv += (c as f64 / draws as f64 - p).abs();
        }
        assert!(tv / 2.0 < 0.01, "total variation {}", tv / 2.0);
    }

    #[test]
    fn long_walk_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = long_walk_frequency_trace(&self_loop(), StateId(0), 100, 10, &mut rng).unwrap();
        assert_eq!(t.len(), 10);
        assert!(t.iter().all(|&(_, f)| f == 1.0));
        let t = long_walk_frequency_trace(&two_state(), StateId(0), 200_000, 100_000, &mut rng).unwrap();
        assert!((t[1].1 - 0.5).abs() < 0.01);
        assert!(long_walk_frequency_trace(&two_state(), StateId(0), 100, 7, &mut rng).is_err());
    }
}
