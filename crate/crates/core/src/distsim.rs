//! Round-based simulation of the message-passing form of the sampler.
//!
//! The anchor launches one token per walk. In every synchronous round each
//! node forwards the tokens in its inbox to a random neighbor and bumps their
//! counters. Tokens reaching the anchor are absorbed as returns; after
//! `theta` rounds the tokens still in flight are truncated where they stand.
//! Each token draws from the substream of its walk id, so the outcome matches
//! [`crate::sampler::sample_batch`] exactly.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{ChainHandle, StateId};
use crate::error::{invalid, Error, Result};
use crate::estimator::{self, EstimateReport, EstimatorParams, ObserverEstimate};
use crate::rng::substream;
use crate::sampler::{BatchStats, ObserverSet, Substreams};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TokenMessage {
    pub walk_id: u64,
    /// Steps taken so far.
    pub counter: u64,
    pub at: StateId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoundLog {
    pub round: u64,
    /// Tokens forwarded this round.
    pub messages: u64,
    /// Tokens absorbed at the anchor this round.
    pub returned: u64,
    /// Tokens still in flight after the round.
    pub in_flight: u64,
}

/// Per-node inboxes and the anchor's tallies.
#[derive(Debug)]
pub struct NetworkSim<'a> {
    chain: &'a ChainHandle,
    anchor: StateId,
    theta: u64,
    inboxes: BTreeMap<StateId, Vec<TokenMessage>>,
    rngs: Vec<ChaCha8Rng>,
    observer_slot: BTreeMap<StateId, usize>,
    arrivals: Vec<u64>,
    returned_steps: u64,
    returned: u64,
    forwarded: u64,
    round: u64,
}

impl<'a> NetworkSim<'a> {
    pub fn new(
        chain: &'a ChainHandle,
        anchor: StateId,
        theta: u64,
        n: u64,
        observers: &[StateId],
        streams: Substreams,
    ) -> Result<Self> {
        if theta == 0 || n == 0 {
            return Err(invalid("theta and N must be at least 1"));
        }
        if !chain.contains(anchor) {
            return Err(Error::InvalidState(anchor));
        }
        for &o in observers {
            if !chain.contains(o) {
                return Err(Error::InvalidState(o));
            }
        }
        let launched = (0..n).map(|walk_id| TokenMessage { walk_id, counter: 0, at: anchor }).collect();
        Ok(NetworkSim {
            chain,
            anchor,
            theta,
            inboxes: BTreeMap::from([(anchor, launched)]),
            rngs: (0..n).map(|k| substream(streams.seed, streams.iteration, k)).collect(),
            observer_slot: observers.iter().enumerate().map(|(k, &o)| (o, k)).collect(),
            arrivals: vec![0; observers.len()],
            returned_steps: 0,
            returned: 0,
            forwarded: 0,
            round: 0,
        })
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn in_flight(&self) -> u64 {
        self.inboxes.values().map(|v| v.len() as u64).sum()
    }

    /// Advances every token by one step, visiting nodes in key order.
    pub fn step_round(&mut self) -> Result<RoundLog> {
        self.round += 1;
        let mut next: BTreeMap<StateId, Vec<TokenMessage>> = BTreeMap::new();
        let (mut messages, mut returned) = (0, 0);
        for (node, inbox) in std::mem::take(&mut self.inboxes) {
            for mut token in inbox {
                let u: f64 = self.rngs[token.walk_id as usize].random();
                let to = self.chain.step_with(node, u)?;
                token.counter += 1;
                token.at = to;
                assert!(token.counter <= self.theta, "token {} passed theta", token.walk_id);
                messages += 1;
                if let Some(&k) = self.observer_slot.get(&to) {
                    self.arrivals[k] += 1;
                }
                if to == self.anchor {
                    // the anchor absorbs returning tokens
                    returned += 1;
                    self.returned_steps += token.counter;
                } else {
                    next.entry(to).or_default().push(token);
                }
            }
        }
        self.inboxes = next;
        self.forwarded += messages;
        self.returned += returned;
        Ok(RoundLog { round: self.round, messages, returned, in_flight: self.in_flight() })
    }

    /// Tokens left in flight, which stopped where they stand.
    pub fn stranded(&self) -> Vec<TokenMessage> {
        let mut v: Vec<_> = self.inboxes.values().flatten().cloned().collect();
        v.sort_by_key(|t| t.walk_id);
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistributedBatch {
    pub stats: BatchStats,
    pub rounds: Vec<RoundLog>,
    pub messages_forwarded: u64,
    /// Final positions of truncated tokens.
    pub stranded: Vec<TokenMessage>,
}

/// Runs `theta` synchronous rounds (fewer if every token is back) and
/// aggregates the anchor's tallies.
pub fn run_distributed(
    chain: &ChainHandle,
    anchor: StateId,
    theta: u64,
    n: u64,
    observers: &[StateId],
    streams: Substreams,
) -> Result<DistributedBatch> {
    let mut sim = NetworkSim::new(chain, anchor, theta, n, observers, streams)?;
    let mut rounds = Vec::new();
    while sim.round() < theta && sim.in_flight() > 0 {
        rounds.push(sim.step_round()?);
    }
    let stranded = sim.stranded();
    let truncated = stranded.len() as u64;
    assert_eq!(sim.returned + truncated, n, "tokens lost");
    let total_steps = sim.returned_steps + truncated * theta;
    let stats = BatchStats::from_sums(n, theta, total_steps, truncated, observers.to_vec(), sim.arrivals.clone());
    Ok(DistributedBatch { stats, rounds, messages_forwarded: sim.forwarded, stranded })
}

/// Each observer's visit count over the broadcast step total `N * T_hat`.
pub fn broadcast_normalize(stats: &BatchStats, anchor: StateId) -> Vec<ObserverEstimate> {
    estimator::observer_estimates(stats, anchor)
}

/// Rounds of one estimator iteration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRounds {
    pub t: u32,
    pub rounds: Vec<RoundLog>,
}

/// The estimator with every batch produced by the message-passing
/// simulation.
pub fn estimate_distributed(
    chain: &ChainHandle,
    anchor: StateId,
    params: &EstimatorParams,
    observers: &ObserverSet,
) -> Result<(EstimateReport, Vec<IterationRounds>)> {
    let mut log = Vec::new();
    let report = estimator::run_with(chain, anchor, params, observers, |theta, n, tracked, streams| {
        let out = run_distributed(chain, anchor, theta, n, tracked, streams)?;
        log.push(IterationRounds { t: streams.iteration as u32, rounds: out.rounds });
        Ok(out.stats)
    })?;
    Ok((report, log))
}
