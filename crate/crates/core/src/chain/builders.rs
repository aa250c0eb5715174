use std::collections::{BTreeMap, VecDeque};

use super::{ChainHandle, CountableModel, FiniteChain, StateId, TransitionRow};
use crate::chain::graph::Adjacency;
use crate::error::{invalid, Error, Result};

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("beta {beta} outside (0, 1]")))
    }
}

/// Random surfer chain `P_rs = beta/n + (1-beta) * A_rs / outdeg(r)`.
pub fn build_pagerank(adj: &Adjacency, beta: f64) -> Result<ChainHandle> {
    check_beta(beta)?;
    let n = adj.len();
    let jump = beta / n as f64;
    let rows = (0..n)
        .map(|r| {
            let out = adj.targets(r);
            let mut probs = vec![jump; n];
            let w = (1.0 - beta) / out.len() as f64;
            for &t in out {
                probs[t] += w;
            }
            TransitionRow::new(
                probs
                    .into_iter()
                    .enumerate()
                    .map(|(c, p)| (StateId(c as u64), p))
                    .collect(),
            )
        })
        .collect();
    Ok(FiniteChain::from_rows(0, rows)?.into())
}

/// Personalized PageRank chain `beta * e_x + (1-beta) D^{-1} A`.
///
/// Nodes that cannot be reached from `x` are transient for this chain, so the
/// returned chain is restricted to the closed class of `x`; its state keys are
/// the original node numbers.
pub fn build_personalized_pagerank(adj: &Adjacency, beta: f64, x: StateId) -> Result<ChainHandle> {
    check_beta(beta)?;
    let n = adj.len();
    let xi = usize::try_from(x.0)
        .ok()
        .filter(|&v| v < n)
        .ok_or(Error::InvalidState(x))?;

    let mut reached = vec![false; n];
    reached[xi] = true;
    let mut order = vec![xi];
    if beta < 1.0 {
        let mut queue = VecDeque::from([xi]);
        while let Some(u) = queue.pop_front() {
            for &v in adj.targets(u) {
                if !reached[v] {
                    reached[v] = true;
                    order.push(v);
                    queue.push_back(v);
                }
            }
        }
    }
    order.sort_unstable();

    let rows = order
        .iter()
        .map(|&r| {
            let mut probs: BTreeMap<usize, f64> = BTreeMap::new();
            *probs.entry(xi).or_default() += beta;
            if beta < 1.0 {
                let out = adj.targets(r);
                let w = (1.0 - beta) / out.len() as f64;
                for &t in out {
                    *probs.entry(t).or_default() += w;
                }
            }
            TransitionRow::new(probs.into_iter().map(|(c, p)| (StateId(c as u64), p)).collect())
        })
        .collect();

    let chain = if order.len() == n {
        FiniteChain::from_rows(0, rows)?
    } else {
        FiniteChain::from_keyed_rows(order.iter().map(|&v| StateId(v as u64)).collect(), rows)?
    };
    Ok(chain.into())
}

/// Biased walk on the non-negative integers with a holding boundary at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Mm1 {
    pub q: f64,
}

impl Mm1 {
    pub fn new(q: f64) -> Result<Self> {
        if q > 0.0 && q < 0.5 {
            Ok(Mm1 { q })
        } else {
            Err(invalid(format!("q1 {q} outside (0, 0.5)")))
        }
    }

    /// Stationary probability `(1-2q)/(1-q) * (q/(1-q))^s`.
    pub fn stationary(&self, s: u64) -> f64 {
        let r = self.q / (1.0 - self.q);
        (1.0 - r) * r.powi(s as i32)
    }

    /// The chain on states `0..cap` with the top state holding instead of
    /// stepping up.
    pub fn truncated(&self, cap: usize) -> Result<FiniteChain> {
        if cap < 2 {
            return Err(invalid("truncation cap must be at least 2"));
        }
        let q = self.q;
        let rows = (0..cap as u64)
            .map(|s| {
                let (up, down) = if s + 1 == cap as u64 { (s, s - 1) } else { (s + 1, s.saturating_sub(1)) };
                TransitionRow::new(vec![(StateId(up), q), (StateId(down), 1.0 - q)])
            })
            .collect();
        FiniteChain::from_rows(0, rows)
    }
}

impl CountableModel for Mm1 {
    fn row(&self, s: StateId) -> Result<TransitionRow> {
        let down = if s.0 == 0 { 0 } else { s.0 - 1 };
        Ok(TransitionRow::new(vec![(StateId(s.0 + 1), self.q), (StateId(down), 1.0 - self.q)]))
    }

    #[inline]
    fn step_with(&self, s: StateId, u: f64) -> Result<StateId> {
        Ok(if u < self.q {
            StateId(s.0 + 1)
        } else {
            StateId(s.0.saturating_sub(1))
        })
    }

    fn name(&self) -> String {
        format!("mm1 queue (q1 = {})", self.q)
    }

    fn truncate(&self, boundary_mass: f64) -> Option<Result<(FiniteChain, usize)>> {
        // mass on states >= c is r^c
        let r = self.q / (1.0 - self.q);
        let cap = ((boundary_mass.ln() / r.ln()).floor() as usize + 1).max(2);
        Some(self.truncated(cap).map(|c| (c, cap)))
    }
}

pub fn build_mm1(q1: f64) -> Result<ChainHandle> {
    Ok(ChainHandle::countable(Mm1::new(q1)?))
}

/// Chain on `1..=n2` pulled toward state 1 below `n1` and toward `n2` above it.
pub fn build_magnet(q1: f64, q2: f64, n1: usize, n2: usize) -> Result<ChainHandle> {
    for (name, q) in [("q1", q1), ("q2", q2)] {
        if !(q > 0.0 && q < 0.5) {
            return Err(invalid(format!("{name} {q} outside (0, 0.5)")));
        }
    }
    if !(1 < n1 && n1 < n2) {
        return Err(invalid(format!("need 1 < n1 < n2, got n1 = {n1}, n2 = {n2}")));
    }
    let row = |s: usize| -> TransitionRow {
        let e = |t: usize, p: f64| (StateId(t as u64), p);
        let entries = if s == 1 {
            vec![e(1, 1.0 - q1), e(2, q1)]
        } else if s == n2 {
            vec![e(n2 - 1, q2), e(n2, 1.0 - q2)]
        } else if s < n1 {
            vec![e(s - 1, 1.0 - q1), e(s + 1, q1)]
        } else if s == n1 {
            vec![e(s - 1, 0.5), e(s + 1, 0.5)]
        } else {
            vec![e(s - 1, q2), e(s + 1, 1.0 - q2)]
        };
        TransitionRow::new(entries)
    };
    Ok(FiniteChain::from_rows(1, (1..=n2).map(row).collect())?.into())
}

/// Lazy clique on `0..k` joined through anchor 0 to a lazy cycle
/// `0 -> k -> k+1 -> ... -> n-1 -> 0`.
pub fn build_clique_cycle(n: usize, k: usize, eps: f64) -> Result<ChainHandle> {
    if !(2 < k && k < n) {
        return Err(invalid(format!("need 2 < k < n, got k = {k}, n = {n}")));
    }
    if !(eps > 0.0 && eps < 0.5) {
        return Err(invalid(format!("eps {eps} outside (0, 0.5)")));
    }
    let e = |t: usize, p: f64| (StateId(t as u64), p);
    let neighbor = 0.5 / (k - 1) as f64;
    let mut rows = Vec::with_capacity(n);
    for s in 0..k {
        let mut entries: Vec<_> = (0..k).filter(|&t| t != s).map(|t| e(t, neighbor)).collect();
        if s == 0 {
            entries.push(e(0, 0.5 - eps));
            entries.push(e(k, eps));
        } else {
            entries.push(e(s, 0.5));
        }
        entries.sort_by_key(|&(t, _)| t);
        rows.push(TransitionRow::new(entries));
    }
    for s in k..n {
        let next = if s + 1 == n { 0 } else { s + 1 };
        let mut entries = vec![e(s, 0.5), e(next, 0.5)];
        entries.sort_by_key(|&(t, _)| t);
        rows.push(TransitionRow::new(entries));
    }
    Ok(FiniteChain::from_rows(0, rows)?.into())
}

/// Walk on the complete graph without self-loops.
pub fn build_clique(n: usize) -> Result<ChainHandle> {
    if n < 3 {
        return Err(invalid(format!("clique needs n >= 3, got {n}")));
    }
    let p = 1.0 / (n - 1) as f64;
    let rows = (0..n)
        .map(|s| {
            TransitionRow::new(
                (0..n).filter(|&t| t != s).map(|t| (StateId(t as u64), p)).collect(),
            )
        })
        .collect();
    Ok(FiniteChain::from_rows(0, rows)?.into())
}
