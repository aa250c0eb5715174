//! Experiment drivers shared by the command line and the acceptance suite.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{build_pagerank, build_personalized_pagerank, Adjacency, ChainHandle, StateId};
use crate::error::{invalid, Result};
use crate::estimator::{self, EstimatorParams};
use crate::oracle::{stationary_exact_with, OracleConfig, OracleTable};
use crate::rng::substream;
use crate::sampler::{long_walk_frequency_trace, ObserverSet};

/// Median of the finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation. `None` for fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// State indices sorted by decreasing `pi`, ties by index.
pub fn rank_by_pi(pi: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| pi[b].total_cmp(&pi[a]).then(a.cmp(&b)));
    order
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub pi_hat: f64,
    pub total_steps: u64,
    pub decision_bit: u8,
    pub t_max: u32,
}

/// One estimator run per threshold, all with the seed of `base`.
pub fn sweep_delta(chain: &ChainHandle, anchor: StateId, base: &EstimatorParams, deltas: &[f64]) -> Result<Vec<SweepRow>> {
    deltas
        .iter()
        .map(|&delta| {
            let params = EstimatorParams { delta, ..base.clone() };
            params.validate()?;
            let r = estimator::run(chain, anchor, &params, &ObserverSet::None)?;
            Ok(SweepRow {
                delta,
                pi_hat: r.pi_hat_final,
                total_steps: r.total_steps,
                decision_bit: r.decision_bit,
                t_max: r.t_max,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaSweepConfig {
    pub replicas: u32,
    pub walk_steps: u64,
    pub checkpoint: u64,
    /// Target for the mean relative error across replicas.
    pub error_target: f64,
    pub seed: u64,
}

impl Default for BetaSweepConfig {
    fn default() -> Self {
        BetaSweepConfig { replicas: 10, walk_steps: 100_000, checkpoint: 1_000, error_target: 0.05, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BetaRow {
    pub anchor: StateId,
    pub beta: f64,
    /// First checkpoint where the mean relative error is under target.
    pub steps_needed: Option<u64>,
    pub expected_return_time: f64,
    pub pi: f64,
}

/// `count` nodes spread evenly over the ranking by PageRank at `beta`,
/// from the highest to the lowest.
pub fn spread_anchors(adj: &Adjacency, beta: f64, count: usize, config: &OracleConfig) -> Result<Vec<StateId>> {
    let chain = build_pagerank(adj, beta)?;
    let finite = chain.finite()?;
    let pi = stationary_exact_with(finite, config)?.pi;
    let order = rank_by_pi(&pi);
    if count == 0 || count > order.len() {
        return Err(invalid(format!("cannot pick {count} anchors from {} nodes", order.len())));
    }
    let last = order.len() - 1;
    Ok((0..count)
        .map(|k| {
            let pos = if count == 1 { 0 } else { k * last / (count - 1) };
            finite.key(order[pos])
        })
        .collect())
}

/// Long-walk frequency estimates of `pi_x` on the personalized PageRank
/// chain of each anchor, one row per (anchor, beta).
pub fn beta_sweep(
    adj: &Adjacency,
    anchors: &[StateId],
    betas: &[f64],
    cfg: &BetaSweepConfig,
    oracle: &OracleConfig,
) -> Result<Vec<BetaRow>> {
    if cfg.replicas == 0 || !(cfg.error_target > 0.0) {
        return Err(invalid("beta sweep needs replicas >= 1 and a positive error target"));
    }
    let mut rows = Vec::new();
    for (a, &x) in anchors.iter().enumerate() {
        for (b, &beta) in betas.iter().enumerate() {
            let chain = build_personalized_pagerank(adj, beta, x)?;
            let finite = chain.finite()?;
            let ix = finite.index_of(x).expect("anchor kept by restriction");
            let pi = stationary_exact_with(finite, oracle)?.pi[ix];
            let stream = (a * betas.len() + b) as u64;
            let traces = (0..cfg.replicas as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = substream(cfg.seed, stream, r);
                    long_walk_frequency_trace(&chain, x, cfg.walk_steps, cfg.checkpoint, &mut rng)
                })
                .collect::<Result<Vec<_>>>()?;
            let steps_needed = (0..traces[0].len())
                .find(|&c| {
                    let err: f64 = traces.iter().map(|t| (t[c].1 - pi).abs() / pi).sum();
                    err / (traces.len() as f64) < cfg.error_target
                })
                .map(|c| traces[0][c].0);
            rows.push(BetaRow { anchor: x, beta, steps_needed, expected_return_time: 1.0 / pi, pi });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnchorRow {
    /// Position in decreasing order of true `pi`, from 1.
    pub rank: usize,
    pub anchor: StateId,
    pub pi_hat: f64,
    pub pi_tilde: f64,
    pub pi_true: f64,
    pub decision_bit: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObserverRow {
    pub rank: usize,
    pub state: StateId,
    pub pi_tilde: f64,
    pub pi_true: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatsRow {
    pub rank: usize,
    pub anchor: StateId,
    pub p_hat: f64,
    pub theta: u64,
    pub total_steps: u64,
}

/// Estimates for every state of the oracle table taken as anchor, labelled
/// by rank of true `pi` when `by_rank` is set and by state order otherwise.
fn each_anchor<T: Send>(
    chain: &ChainHandle,
    table: &OracleTable,
    params: &EstimatorParams,
    limit: Option<usize>,
    by_rank: bool,
    f: impl Fn(usize, StateId, f64, estimator::EstimateReport) -> T + Sync,
) -> Result<Vec<T>> {
    let order: Vec<usize> = if by_rank { rank_by_pi(&table.pi) } else { (0..table.pi.len()).collect() };
    let take = limit.unwrap_or(order.len()).min(order.len());
    order[..take]
        .par_iter()
        .enumerate()
        .map(|(k, &ix)| {
            let anchor = table.keys[ix];
            let report = estimator::run(chain, anchor, params, &ObserverSet::None)?;
            Ok(f(k + 1, anchor, table.pi[ix], report))
        })
        .collect()
}

pub fn reproduce_anchors(
    chain: &ChainHandle,
    table: &OracleTable,
    params: &EstimatorParams,
    limit: Option<usize>,
    by_rank: bool,
) -> Result<Vec<AnchorRow>> {
    each_anchor(chain, table, params, limit, by_rank, |rank, anchor, pi_true, r| AnchorRow {
        rank,
        anchor,
        pi_hat: r.pi_hat_final,
        pi_tilde: r.pi_tilde_of(anchor).unwrap_or(f64::NAN),
        pi_true,
        decision_bit: r.decision_bit,
    })
}

pub fn reproduce_stats(
    chain: &ChainHandle,
    table: &OracleTable,
    params: &EstimatorParams,
    limit: Option<usize>,
    by_rank: bool,
) -> Result<Vec<StatsRow>> {
    each_anchor(chain, table, params, limit, by_rank, |rank, anchor, _, r| StatsRow {
        rank,
        anchor,
        p_hat: r.p_hat_final(),
        theta: r.theta_final(),
        total_steps: r.total_steps,
    })
}

/// Observer estimates for every state of the table from one anchor.
pub fn reproduce_observers(
    chain: &ChainHandle,
    table: &OracleTable,
    anchor: StateId,
    params: &EstimatorParams,
    by_rank: bool,
) -> Result<Vec<ObserverRow>> {
    let observers: Vec<StateId> = table.keys.clone();
    let report = estimator::run(chain, anchor, params, &ObserverSet::Listed(observers))?;
    let order: Vec<usize> = if by_rank { rank_by_pi(&table.pi) } else { (0..table.pi.len()).collect() };
    Ok(order
        .iter()
        .enumerate()
        .map(|(k, &ix)| {
            let state = table.keys[ix];
            ObserverRow { rank: k + 1, state, pi_tilde: report.pi_tilde_of(state).unwrap_or(0.0), pi_true: table.pi[ix] }
        })
        .collect())
}
