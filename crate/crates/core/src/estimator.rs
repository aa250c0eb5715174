//! The iterative truncated return-time estimator.
//!
//! Iteration `t` draws `N(t)` fresh walks truncated at `theta = 2^t`, then
//! stops with bit 0 if the estimate is already below `delta / (1 + eps)`, or
//! with bit 1 once the truncated mass `p_hat * pi_hat` drops below
//! `eps * delta`. Otherwise the threshold doubles and the sample count is
//! rescaled from the current mean walk length.

use serde::{Deserialize, Serialize};

use crate::chain::{ChainHandle, StateId};
use crate::error::{invalid, Result};
use crate::sampler::{sample_batch, BatchStats, ObserverSet, Parallelism, Substreams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub delta: f64,
    pub eps: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Overrides the derived iteration cap.
    pub hard_iteration_cap: Option<u32>,
    #[serde(skip)]
    pub parallelism: Parallelism,
}

impl EstimatorParams {
    pub fn new(delta: f64, eps: f64, alpha: f64, seed: u64) -> Result<Self> {
        let p = EstimatorParams { delta, eps, alpha, seed, hard_iteration_cap: None, parallelism: Parallelism::Sequential };
        p.validate()?;
        Ok(p)
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("eps", self.eps), ("alpha", self.alpha)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(invalid(format!("{name} out of range: {v} not in (0, 1)")));
            }
        }
        if self.hard_iteration_cap == Some(0) {
            return Err(invalid("hard iteration cap must be at least 1"));
        }
        Ok(())
    }

    /// Iteration at which condition (b) is forced: the first `t` with
    /// `2^t >= 1 / (eps * delta)`, since `p_hat * pi_hat <= 1 / theta` always.
    pub fn trigger_iteration(&self) -> u32 {
        let target = 1.0 / (self.eps * self.delta);
        let mut t = 1;
        while ((1u64 << t) as f64) < target {
            t += 1;
        }
        t
    }

    /// `ceil(log2(2 / (eps * delta))) + 2` unless overridden.
    pub fn iteration_cap(&self) -> u32 {
        self.hard_iteration_cap
            .unwrap_or_else(|| (2.0 / (self.eps * self.delta)).log2().ceil() as u32 + 2)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} out of range: {v} not in (0, 1)")))
    }
}

/// `ceil(6 (1 + eps) ln(8 / alpha) / eps^2)`.
pub fn initial_sample_count(eps: f64, alpha: f64) -> Result<u64> {
    check_unit("eps", eps)?;
    check_unit("alpha", alpha)?;
    Ok((6.0 * (1.0 + eps) * (8.0 / alpha).ln() / (eps * eps)).ceil() as u64)
}

/// `ceil(3 (1 + eps) theta ln(4 theta / alpha) / (t_hat eps^2))`.
pub fn next_sample_count(theta_next: u64, t_hat_prev: f64, eps: f64, alpha: f64) -> Result<u64> {
    check_unit("eps", eps)?;
    check_unit("alpha", alpha)?;
    if !(t_hat_prev >= 1.0) {
        return Err(invalid(format!("mean walk length {t_hat_prev} below 1")));
    }
    let theta = theta_next as f64;
    Ok((3.0 * (1.0 + eps) * theta * (4.0 * theta / alpha).ln() / (t_hat_prev * eps * eps)).ceil() as u64)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Stop0,
    Stop1,
    Continue,
}

/// Condition (a) is checked before condition (b).
pub fn check_termination(pi_hat: f64, p_hat: f64, params: &EstimatorParams) -> Decision {
    if pi_hat < params.delta / (1.0 + params.eps) {
        Decision::Stop0
    } else if p_hat * pi_hat < params.eps * params.delta {
        Decision::Stop1
    } else {
        Decision::Continue
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ConditionA,
    ConditionB,
    CapReached,
}

/// Visit-frequency estimate for one observed state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObserverEstimate {
    pub state: StateId,
    pub pi_tilde: f64,
    /// Total visits over the batch; 0 marks an observed state never reached.
    pub visits: u64,
}

/// `pi_tilde_j = F_hat_j / T_hat` for every observer, evaluated as the visit
/// count over the total step count. The anchor entry is `(1 - p_hat) pi_hat`.
pub fn observer_estimates(stats: &BatchStats, anchor: StateId) -> Vec<ObserverEstimate> {
    let pi_hat = 1.0 / stats.t_hat;
    stats
        .observers
        .iter()
        .zip(&stats.visit_sums)
        .map(|(&state, &visits)| {
            let pi_tilde = if state == anchor {
                (1.0 - stats.p_hat) * pi_hat
            } else {
                visits as f64 / stats.total_steps as f64
            };
            ObserverEstimate { state, pi_tilde, visits }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: u32,
    pub theta: u64,
    pub n: u64,
    pub t_hat: f64,
    pub p_hat: f64,
    pub pi_hat: f64,
    /// Always holds the anchor; other observers follow in request order.
    pub pi_tilde: Vec<ObserverEstimate>,
    /// `N * T_hat`, the number of simulated steps.
    pub steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub anchor: StateId,
    pub params: EstimatorParams,
    pub decision_bit: u8,
    pub pi_hat_final: f64,
    pub pi_tilde_final: Vec<ObserverEstimate>,
    pub t_max: u32,
    pub total_steps: u64,
    pub termination: Termination,
    pub trace: Vec<IterationRecord>,
}

impl EstimateReport {
    pub fn final_record(&self) -> &IterationRecord {
        self.trace.last().expect("a report has at least one iteration")
    }

    pub fn theta_final(&self) -> u64 {
        self.final_record().theta
    }

    pub fn p_hat_final(&self) -> f64 {
        self.final_record().p_hat
    }

    pub fn pi_tilde_of(&self, s: StateId) -> Option<f64> {
        self.pi_tilde_final.iter().find(|o| o.state == s).map(|o| o.pi_tilde)
    }
}

/// Runs the estimator from `anchor`, tracking visit frequencies of
/// `observers` (the anchor is always tracked).
pub fn run(chain: &ChainHandle, anchor: StateId, params: &EstimatorParams, observers: &ObserverSet) -> Result<EstimateReport> {
    run_with(chain, anchor, params, observers, |theta, n, tracked, streams| {
        sample_batch(chain, anchor, theta, n, tracked, streams, params.parallelism)
    })
}

/// [`run`] with the batch sampler supplied by the caller, which receives
/// `(theta, N, tracked states, substreams)`.
pub fn run_with(
    chain: &ChainHandle,
    anchor: StateId,
    params: &EstimatorParams,
    observers: &ObserverSet,
    mut batch: impl FnMut(u64, u64, &[StateId], Substreams) -> Result<BatchStats>,
) -> Result<EstimateReport> {
    params.validate()?;
    if !chain.contains(anchor) {
        return Err(crate::Error::InvalidState(anchor));
    }
    let mut tracked = vec![anchor];
    tracked.extend(observers.resolve(chain)?.into_iter().filter(|&s| s != anchor));

    let cap = params.iteration_cap();
    let mut trace = Vec::new();
    let mut n = initial_sample_count(params.eps, params.alpha)?;
    let mut t = 1u32;
    let termination = loop {
        let theta = 1u64 << t;
        let streams = Substreams { seed: params.seed, iteration: t as u64 };
        let stats = batch(theta, n, &tracked, streams)?;
        let pi_hat = 1.0 / stats.t_hat;
        trace.push(IterationRecord {
            t,
            theta,
            n,
            t_hat: stats.t_hat,
            p_hat: stats.p_hat,
            pi_hat,
            pi_tilde: observer_estimates(&stats, anchor),
            steps: stats.total_steps,
        });
        match check_termination(pi_hat, stats.p_hat, params) {
            Decision::Stop0 => break Termination::ConditionA,
            Decision::Stop1 => break Termination::ConditionB,
            Decision::Continue if t >= cap => break Termination::CapReached,
            Decision::Continue => {
                n = next_sample_count(theta * 2, stats.t_hat, params.eps, params.alpha)?;
                t += 1;
            }
        }
    };
    let last = trace.last().expect("loop runs at least once");
    Ok(EstimateReport {
        anchor,
        params: params.clone(),
        decision_bit: u8::from(termination != Termination::ConditionA),
        pi_hat_final: last.pi_hat,
        pi_tilde_final: last.pi_tilde.clone(),
        t_max: t,
        total_steps: trace.iter().map(|r| r.steps).sum(),
        termination,
        trace,
    })
}
