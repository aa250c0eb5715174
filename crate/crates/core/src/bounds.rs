//! Closed-form guarantees: return-time tail envelopes, estimation error
//! bounds, iteration and step budgets, and the Lyapunov drift check behind
//! the countable-state results.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::chain::{ChainHandle, StateId};
use crate::error::{invalid, Result};
use crate::estimator::initial_sample_count;

/// A bound value before and after clipping to `[0, 1]`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct Bound {
    pub raw: f64,
    pub clipped: f64,
}

impl Bound {
    fn new(raw: f64) -> Self {
        Bound { raw, clipped: raw.clamp(0.0, 1.0) }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} out of range: {v} not in (0, 1)")))
    }
}

/// `2 * 2^(-k / 2H)`: the finite-chain envelope of `P_i(T_i > k)`.
pub fn tail_bound_finite(h: f64, k: u64) -> Result<Bound> {
    if !(h >= 1.0) {
        return Err(invalid(format!("maximal hitting time {h} below 1")));
    }
    Ok(Bound::new(2.0 * (-(k as f64) / (2.0 * h)).exp2()))
}

/// `4 * 2^(-k / R)`: the countable-chain envelope.
pub fn tail_bound_countable(r: f64, k: u64) -> Result<Bound> {
    positive("R", r)?;
    Ok(Bound::new(4.0 * (-(k as f64) / r).exp2()))
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct HajekConstants {
    pub omega: f64,
    pub eta: f64,
    pub rho: f64,
}

/// `omega = 1/nu`, `eta = gamma / (2(e-2) nu^2)`, `rho = 1 - gamma^2 / (4(e-2) nu^2)`.
pub fn hajek_constants(gamma: f64, nu_max: f64) -> Result<HajekConstants> {
    positive("gamma", gamma)?;
    positive("nu_max", nu_max)?;
    if gamma > nu_max {
        return Err(invalid(format!("gamma {gamma} exceeds nu_max {nu_max}")));
    }
    let e2 = std::f64::consts::E - 2.0;
    let c = HajekConstants {
        omega: 1.0 / nu_max,
        eta: gamma / (2.0 * e2 * nu_max * nu_max),
        rho: 1.0 - gamma * gamma / (4.0 * e2 * nu_max * nu_max),
    };
    debug_assert!(c.eta <= c.omega && c.rho > 0.0 && c.rho < 1.0);
    Ok(c)
}

impl HajekConstants {
    /// The admissible set for `(omega, eta, rho)` under drift `gamma` and
    /// jump bound `nu_max`.
    pub fn admissible(&self, gamma: f64, nu_max: f64) -> bool {
        let w = self.omega;
        let g = (w * nu_max).exp() - (1.0 + w * nu_max);
        let eta_cap = w.min(gamma * w * w / g);
        let rho_min = 1.0 - gamma * self.eta + g * self.eta * self.eta / (w * w);
        self.eta > 0.0 && self.eta <= eta_cap * (1.0 + 1e-12) && self.rho < 1.0 && self.rho >= rho_min - 1e-12
    }
}

/// Tail rate `R_i` for the countable envelope.
///
/// The proof picks `W = 2 H (2 + k/R)` visits to the finite set and a path
/// length `Z = 2R - ln2 e^(eta nu) / (0.8 (1 - rho)) + k`, which pins
/// `R = 2H (1.25 e^(2 eta nu) / ((1-rho)(e^(eta nu) - rho)) + 1) + ln2 e^(eta nu) / (0.8 (1-rho))`.
pub fn r_i(h_b: f64, consts: &HajekConstants, nu_max: f64) -> Result<f64> {
    if !(h_b >= 1.0) {
        return Err(invalid(format!("restricted hitting time {h_b} below 1")));
    }
    positive("nu_max", nu_max)?;
    let HajekConstants { eta, rho, .. } = *consts;
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid(format!("rho {rho} outside (0, 1)")));
    }
    let en = (eta * nu_max).exp();
    let c = 1.25 * en * en / ((1.0 - rho) * (en - rho));
    Ok(2.0 * h_b * (c + 1.0) + std::f64::consts::LN_2 * en / (0.8 * (1.0 - rho)))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum AnchorMode {
    /// Holds at every iteration.
    Finite,
    /// Holds at the final iteration when condition (b) stopped the run.
    TerminatedB,
}

/// Relative error bound on `pi_hat` for a finite chain.
pub fn error_bound_anchor(eps: f64, theta: u64, h: f64, z_max: f64, mode: AnchorMode) -> Result<Bound> {
    unit("eps", eps)?;
    positive("H", h)?;
    positive("Z_max", z_max)?;
    let raw = match mode {
        AnchorMode::Finite => 4.0 * (1.0 - eps) * (-(theta as f64) / (2.0 * h)).exp2() * z_max + eps,
        AnchorMode::TerminatedB => eps * (3.0 * z_max + 1.0),
    };
    Ok(Bound::new(raw))
}

/// Relative error bound on `pi_tilde` of the anchor. Only meaningful once
/// `P_i(T_i > theta) < 1/2`, which the caller must establish.
pub fn error_bound_tilde(eps: f64, theta: u64, h: f64, z_max: f64) -> Result<Bound> {
    unit("eps", eps)?;
    positive("H", h)?;
    positive("Z_max", z_max)?;
    let decay = (-(theta as f64) / (2.0 * h)).exp2();
    let raw = 4.0 * (1.0 + eps) / (1.0 - eps) * decay * (2.0 * z_max - 1.0).max(1.0) + 2.0 * eps / (1.0 - eps);
    Ok(Bound::new(raw))
}

/// Additive error bound on `pi_tilde_j` for an observer `j`.
pub fn error_bound_observer(eps: f64, theta: u64, h: f64, z_max_j: f64, pi_hat_i: f64, pi_tilde_j: f64) -> Result<f64> {
    unit("eps", eps)?;
    positive("H", h)?;
    positive("Z_max", z_max_j)?;
    let decay = (-(theta as f64) / (2.0 * h)).exp2();
    Ok(4.0 * (1.0 + eps) * decay * z_max_j * pi_hat_i + eps * pi_tilde_j + eps)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub enum CountableMode {
    Anchor,
    Tilde,
}

/// Countable-chain analogues of the anchor and `pi_tilde` bounds, with the
/// tail rate `R` in place of `2H`.
pub fn countable_error_bound(eps: f64, theta: u64, r: f64, pi_i: f64, mode: CountableMode) -> Result<Bound> {
    unit("eps", eps)?;
    positive("R", r)?;
    positive("pi_i", pi_i)?;
    let decay = (-(theta as f64) / r).exp2();
    let geometric = 1.0 - (-1.0 / r).exp2();
    let raw = match mode {
        CountableMode::Anchor => 4.0 * (1.0 - eps) * decay / geometric * pi_i + eps,
        CountableMode::Tilde => {
            8.0 * (1.0 + eps) / (1.0 - eps) * decay * (pi_i / geometric).max(1.0) + 2.0 * eps / (1.0 - eps)
        }
    };
    Ok(Bound::new(raw))
}

/// `2 exp(-eps^2 N mean / (3 theta))`: Chernoff tail for the mean of `N`
/// variables in `[0, theta]` with the given mean.
pub fn chernoff_check(n: u64, theta: u64, mean: f64, eps: f64) -> Result<f64> {
    positive("mean", mean)?;
    positive("eps", eps)?;
    if theta == 0 || n == 0 {
        return Err(invalid("N and theta must be positive"));
    }
    Ok(2.0 * (-eps * eps * n as f64 * mean / (3.0 * theta as f64)).exp())
}

/// Step budget for the first `t` iterations on the event that every mean
/// walk length is within `(1 +- eps)` of its expectation.
///
/// Iteration 1 costs at most `2 N(1)`. For `k >= 2`, `N(k) <= 3(1+eps) theta_k
/// ln(4 theta_k / alpha) / (T(k-1) eps^2) + 1` and `T(k) <= 2 (1+eps)/(1-eps) T(k-1)`
/// because expected truncated lengths at most double, so
/// `N(k) T(k) <= 6 (1+eps)^2 theta_k ln(4 theta_k / alpha) / ((1-eps) eps^2) + theta_k`.
pub fn steps_through(eps: f64, alpha: f64, t: u32) -> Result<f64> {
    let mut total = 2.0 * initial_sample_count(eps, alpha)? as f64;
    for k in 2..=t {
        let theta = (k as f64).exp2();
        total += 6.0 * (1.0 + eps).powi(2) * theta * (4.0 * theta / alpha).ln() / ((1.0 - eps) * eps * eps) + theta;
    }
    Ok(total)
}

/// Locality quantity of the anchor used by the chain-dependent step bounds.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailRate {
    /// Finite chain: maximal hitting time `H_i`, tail `2 * 2^(-k/2H)`.
    Finite { h: f64 },
    /// Countable chain: rate `R_i`, tail `4 * 2^(-k/R)`.
    Countable { r: f64 },
}

impl TailRate {
    /// `(c, s)` with tail `c * 2^(-k/s)`.
    fn envelope(self) -> (f64, f64) {
        match self {
            TailRate::Finite { h } => (2.0, 2.0 * h),
            TailRate::Countable { r } => (4.0, r),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepBound {
    Applicable { iterations: u32, steps: f64 },
    Inapplicable { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepBounds {
    /// First `t` with `2^t >= 1/(eps delta)`; condition (b) must hold there.
    pub trigger_iteration: u32,
    pub iteration_cap: u32,
    /// `ln(1/(eps delta))` as the iteration bound is printed.
    pub printed_iteration_bound: f64,
    /// Step budget through the trigger iteration.
    pub general_steps: f64,
    /// Budget for anchors with `pi_i < (1-eps) delta / (1+eps)` (stop by (a)).
    pub low_mass: Option<StepBound>,
    /// Budget for any anchor (stop by (b)).
    pub any_anchor: Option<StepBound>,
}

/// Iteration and step budgets; the chain-dependent parts need the anchor's
/// tail rate and stationary probability.
pub fn step_bounds(eps: f64, delta: f64, alpha: f64, extras: Option<(TailRate, f64)>) -> Result<StepBounds> {
    unit("eps", eps)?;
    unit("delta", delta)?;
    unit("alpha", alpha)?;
    let params = crate::estimator::EstimatorParams::new(delta, eps, alpha, 0)?;
    let trigger = params.trigger_iteration();
    let budget = |t: u32| -> Result<StepBound> {
        Ok(StepBound::Applicable { iterations: t, steps: steps_through(eps, alpha, t)? })
    };
    let (low_mass, any_anchor) = match extras {
        None => (None, None),
        Some((rate, pi)) => {
            unit("pi_i", pi)?;
            let (c, s) = rate.envelope();
            let geometric = 1.0 - (-1.0 / s).exp2();
            let to_iterations = |theta: f64| theta.max(2.0).log2().ceil() as u32;

            // expected truncation loss c 2^(-theta/s) / (1 - 2^(-1/s)) must
            // fall below 1/pi - (1+eps)/((1-eps) delta)
            let a = if pi < (1.0 - eps) * delta / (1.0 + eps) {
                let gap = 1.0 / pi - (1.0 + eps) / ((1.0 - eps) * delta);
                let theta = s * (c / (geometric * gap)).log2();
                budget(to_iterations(theta))?
            } else {
                StepBound::Inapplicable { reason: format!("pi_i = {pi} is not below (1-eps) delta/(1+eps)") }
            };

            // theta with c 2^(-theta/s) <= 1/(pi X), plus log2(2/alpha) more
            // iterations for the Markov-inequality retries
            let x = 2.0 / ((1.0 - eps) * eps * delta) + 1.0 / geometric;
            let inner = (c * pi * x).ln();
            let b = if inner > 0.0 {
                let t = (2.0 / alpha).log2() + (s / std::f64::consts::LN_2 * inner).log2();
                budget(t.max(1.0).ceil() as u32)?
            } else {
                StepBound::Inapplicable { reason: format!("log argument {} is not above 1", c * pi * x) }
            };
            (Some(a), Some(b))
        }
    };
    Ok(StepBounds {
        trigger_iteration: trigger,
        iteration_cap: params.iteration_cap(),
        printed_iteration_bound: (1.0 / (eps * delta)).ln(),
        general_steps: steps_through(eps, alpha, trigger)?,
        low_mass,
        any_anchor,
    })
}

/// Lyapunov function with its drift constants.
#[derive(Clone)]
pub struct LyapunovSpec {
    pub v: Arc<dyn Fn(StateId) -> f64 + Send + Sync>,
    pub b: f64,
    pub nu_max: f64,
    pub gamma: f64,
}

impl fmt::Debug for LyapunovSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovSpec")
            .field("b", &self.b)
            .field("nu_max", &self.nu_max)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl LyapunovSpec {
    /// `V(x) = x` on integer-keyed chains.
    pub fn linear(b: f64, nu_max: f64, gamma: f64) -> Self {
        LyapunovSpec { v: Arc::new(|s: StateId| s.0 as f64), b, nu_max, gamma }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum FosterViolation {
    Jump { from: StateId, to: StateId, change: f64 },
    Drift { state: StateId, drift: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FosterReport {
    pub depth: usize,
    pub states_checked: usize,
    /// Members of `{V <= b}` met during exploration.
    pub finite_set: Vec<StateId>,
    /// Set when the anchor lay outside `{V <= b}` and `V` was lowered to `b`
    /// there, with the jump bound widened to match.
    pub adjusted_nu_max: Option<f64>,
    pub violations: Vec<FosterViolation>,
}

impl FosterReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

const DRIFT_TOL: f64 = 1e-12;

/// Checks the jump bound and the drift condition on every state within
/// `depth` transitions of the anchor.
pub fn foster_check(chain: &ChainHandle, anchor: StateId, spec: &LyapunovSpec, depth: usize) -> Result<FosterReport> {
    positive("nu_max", spec.nu_max)?;
    positive("gamma", spec.gamma)?;
    if !chain.contains(anchor) {
        return Err(crate::Error::InvalidState(anchor));
    }
    let v_anchor = (spec.v)(anchor);
    let lowered = v_anchor > spec.b;
    let v = |s: StateId| if lowered && s == anchor { spec.b } else { (spec.v)(s) };
    let nu = if lowered { spec.nu_max + v_anchor - spec.b } else { spec.nu_max };

    let mut seen: HashMap<StateId, usize> = HashMap::from([(anchor, 0)]);
    let mut queue = VecDeque::from([anchor]);
    let mut violations = Vec::new();
    let mut finite_set = HashSet::new();
    while let Some(x) = queue.pop_front() {
        let d = seen[&x];
        let vx = v(x);
        let row = chain.row(x)?;
        let mut drift = 0.0;
        for &(y, p) in &row.entries {
            if p <= 0.0 {
                continue;
            }
            let change = v(y) - vx;
            if change.abs() > nu + DRIFT_TOL {
                violations.push(FosterViolation::Jump { from: x, to: y, change });
            }
            drift += p * change;
            if d < depth && !seen.contains_key(&y) {
                seen.insert(y, d + 1);
                queue.push_back(y);
            }
        }
        if vx <= spec.b {
            finite_set.insert(x);
        } else if drift > -spec.gamma + DRIFT_TOL {
            violations.push(FosterViolation::Drift { state: x, drift });
        }
    }
    let mut finite_set: Vec<StateId> = finite_set.into_iter().collect();
    finite_set.sort();
    Ok(FosterReport {
        depth,
        states_checked: seen.len(),
        finite_set,
        adjusted_nu_max: lowered.then_some(nu),
        violations,
    })
}

/// Default exploration depth `max(1, ceil(10 b))`.
pub fn default_frontier_depth(b: f64) -> usize {
    ((10.0 * b).ceil() as usize).max(1)
}
