//! Exact quantities for small finite chains.
//!
//! Everything here works in the index space of a [`FiniteChain`]; use
//! [`FiniteChain::index_of`] to translate state keys.

pub mod linalg;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::chain::{ChainHandle, FiniteChain, StateId};
use crate::error::{invalid, Error, Result};
use linalg::{gth_stationary, norm1, DenseLu, Dot2, MMatrixLu, RefinedSolver};

pub const DEFAULT_CAP: usize = 5000;
pub const CAP_ENV: &str = "LOCOSTAT_ORACLE_CAP";
/// Inverses with a 1-norm condition number above this are flagged.
pub const CONDITION_FLAG: f64 = 1e12;
/// Default stopping level and step cap for long tail horizons.
pub const TAIL_TOL: f64 = 1e-13;
pub const TAIL_MAX_STEPS: usize = 1_000_000;
/// Boundary mass allowed when truncating a countable chain.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub cap: usize,
}

impl Default for OracleConfig {
    /// Reads the cap from `LOCOSTAT_ORACLE_CAP` when set.
    fn default() -> Self {
        let cap = std::env::var(CAP_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_CAP);
        OracleConfig { cap }
    }
}

impl OracleConfig {
    fn check(&self, chain: &FiniteChain) -> Result<()> {
        if chain.len() > self.cap {
            Err(Error::OracleTooLarge { states: chain.len(), cap: self.cap })
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Stationary {
    pub pi: Vec<f64>,
    /// `max_k |(pi P)_k - pi_k|`.
    pub residual: f64,
}

/// Solves `pi P = pi`, `sum pi = 1` by GTH elimination.
pub fn stationary_exact(chain: &FiniteChain) -> Result<Stationary> {
    stationary_exact_with(chain, &OracleConfig::default())
}

pub fn stationary_exact_with(chain: &FiniteChain, config: &OracleConfig) -> Result<Stationary> {
    config.check(chain)?;
    let n = chain.len();
    let p = DMatrix::from_row_slice(n, n, &chain.dense());
    let pi = gth_stationary(p);
    let residual = stationary_residual(chain, &pi);
    if !(residual < 1e-8) || pi.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Numerical { context: "stationary solve".into(), residual });
    }
    Ok(Stationary { pi, residual })
}

pub fn stationary_residual(chain: &FiniteChain, pi: &[f64]) -> f64 {
    let n = chain.len();
    let mut acc = vec![Dot2::default(); n];
    for (r, &w) in pi.iter().enumerate() {
        for (c, p) in chain.row_entries(r) {
            acc[c].add_prod(w, p);
        }
    }
    acc.iter()
        .zip(pi)
        .map(|(a, &v)| {
            let mut d = *a;
            d.add(-v);
            d.value().abs()
        })
        .fold(0.0, f64::max)
}

/// `b - (I - P + 1 pi^T) x` for `x = hi + lo`, evaluated with compensated
/// sums.
fn fundamental_residual(
    chain: &FiniteChain,
    pi: &[f64],
    hi: &DVector<f64>,
    lo: &DVector<f64>,
    b: &DVector<f64>,
) -> DVector<f64> {
    let mut pix = Dot2::default();
    for (k, &w) in pi.iter().enumerate() {
        pix.add_prod(w, hi[k]);
        pix.add_prod(w, lo[k]);
    }
    DVector::from_fn(chain.len(), |j, _| {
        let mut acc = Dot2::new(b[j]);
        for (c, p) in chain.row_entries(j).filter(|&(c, _)| c != j) {
            acc.add_prod(-p, hi[j]);
            acc.add_prod(p, hi[c]);
            acc.add_prod(-p, lo[j]);
            acc.add_prod(p, lo[c]);
        }
        acc.add_dot2(pix.neg());
        acc.value()
    })
}

#[derive(Clone, Debug)]
pub struct Fundamental {
    /// Leading part of `Z`.
    pub z: DMatrix<f64>,
    /// Trailing part: `Z = z + z_lo` to roughly twice working precision.
    pub z_lo: DMatrix<f64>,
    /// `||A||_1 ||Z||_1` for `A = I - P + 1 pi^T`.
    pub cond1: f64,
    pub ill_conditioned: bool,
    /// `max_k ||e_k - A z_k||_inf` after refinement.
    pub residual: f64,
}

impl Fundamental {
    pub fn entry(&self, r: usize, c: usize) -> Dot2 {
        let mut v = Dot2::new(self.z[(r, c)]);
        v.add(self.z_lo[(r, c)]);
        v
    }

    /// `Z_ac - Z_bc` without cancellation loss.
    pub fn col_diff(&self, a: usize, b: usize, c: usize) -> f64 {
        (self.entry(a, c) - self.entry(b, c)).value()
    }
}

/// `Z = (I - P + 1 pi^T)^-1`, column by column with iterative refinement.
pub fn fundamental_matrix(chain: &FiniteChain, pi: &[f64]) -> Result<Fundamental> {
    fundamental_matrix_with(chain, pi, &OracleConfig::default())
}

pub fn fundamental_matrix_with(chain: &FiniteChain, pi: &[f64], config: &OracleConfig) -> Result<Fundamental> {
    config.check(chain)?;
    let n = chain.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    for r in 0..n {
        for (c, p) in chain.row_entries(r) {
            a[(r, c)] -= p;
        }
        for c in 0..n {
            a[(r, c)] += pi[c];
        }
    }
    let a_norm = norm1(&a);
    let solver = RefinedSolver::new(
        DenseLu::new(a),
        |hi, lo, b| fundamental_residual(chain, pi, hi, lo, b),
        "fundamental matrix",
    );
    let mut z = DMatrix::zeros(n, n);
    let mut z_lo = DMatrix::zeros(n, n);
    let mut residual: f64 = 0.0;
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let col = solver.solve(&e)?;
        residual = residual.max(fundamental_residual(chain, pi, &col.hi, &col.lo, &e).amax());
        z.set_column(k, &col.hi);
        z_lo.set_column(k, &col.lo);
    }
    let cond1 = a_norm * norm1(&z);
    Ok(Fundamental { ill_conditioned: !(cond1 <= CONDITION_FLAG), z, z_lo, cond1, residual })
}

/// `max_k |Z_ki|`.
pub fn z_max(z: &DMatrix<f64>, i: usize) -> f64 {
    z.column(i).amax()
}

#[derive(Clone, Debug, Serialize)]
pub struct Hitting {
    /// `times[j] = E_j[T_i]`; the anchor entry is the mean return time.
    pub times: Vec<f64>,
    /// Trailing parts, so that `times[j] + times_lo[j]` carries roughly
    /// twice working precision.
    pub times_lo: Vec<f64>,
    /// `H_i = max_j E_j[T_i]`.
    pub max: f64,
}

impl Hitting {
    pub fn time(&self, j: usize) -> Dot2 {
        let mut v = Dot2::new(self.times[j]);
        v.add(self.times_lo[j]);
        v
    }
}

/// Mean hitting times of `i` by solving `h_j = 1 + sum_{k != i} P_jk h_k`.
///
/// The system is factored without subtractive pivots, so hitting times that
/// differ by many orders of magnitude are all accurate to a few ulps before
/// refinement.
pub fn expected_hitting(chain: &FiniteChain, i: usize) -> Result<Hitting> {
    expected_hitting_with(chain, i, &OracleConfig::default())
}

pub fn expected_hitting_with(chain: &FiniteChain, i: usize, config: &OracleConfig) -> Result<Hitting> {
    hitting_cost(chain, i, &vec![1.0; chain.len()], config)
}

/// Largest mean hitting time of `i` for the chain watched only on `set`
/// (the chain of successive visits to `set`), which must contain `i`.
/// Time counts visits to `set`, so the result is at least 1.
pub fn censored_hitting_max(chain: &FiniteChain, set: &[usize], i: usize, config: &OracleConfig) -> Result<f64> {
    if !set.contains(&i) {
        return Err(invalid(format!("state index {i} is not in the watched set")));
    }
    let mut inside = vec![false; chain.len()];
    for &s in set {
        *inside.get_mut(s).ok_or_else(|| invalid(format!("state index {s} out of range")))? = true;
    }
    // each step pays 1 exactly when it lands in the watched set
    let cost: Vec<f64> = (0..chain.len())
        .map(|r| chain.row_entries(r).filter(|&(c, _)| inside[c]).map(|(_, p)| p).sum())
        .collect();
    let h = hitting_cost(chain, i, &cost, config)?;
    Ok(set.iter().map(|&j| h.times[j]).fold(0.0, f64::max))
}

/// Solves `h_j = cost_j + sum_{k != i} P_jk h_k` for `j != i` and evaluates
/// the same right-hand side at `i`.
fn hitting_cost(chain: &FiniteChain, i: usize, cost: &[f64], config: &OracleConfig) -> Result<Hitting> {
    config.check(chain)?;
    let n = chain.len();
    if i >= n {
        return Err(invalid(format!("state index {i} outside 0..{n}")));
    }
    if n == 1 {
        return Ok(Hitting { times: vec![cost[0]], times_lo: vec![0.0], max: cost[0] });
    }
    // reduced system over the states other than i
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let pos = |j: usize| if j < i { j } else { j - 1 };
    let m = n - 1;
    let mut off = vec![0.0; m * m];
    let mut defect = vec![0.0; m];
    for (row, &j) in others.iter().enumerate() {
        for (c, p) in chain.row_entries(j) {
            if c == i {
                defect[row] += p;
            } else if c != j {
                off[row * m + pos(c)] += p;
            }
        }
    }
    let residual = |hi: &DVector<f64>, lo: &DVector<f64>, b: &DVector<f64>| {
        DVector::from_fn(m, |row, _| {
            let j = others[row];
            let mut acc = Dot2::new(b[row]);
            for (c, p) in chain.row_entries(j).filter(|&(c, _)| c != j) {
                acc.add_prod(-p, hi[row]);
                acc.add_prod(-p, lo[row]);
                if c != i {
                    acc.add_prod(p, hi[pos(c)]);
                    acc.add_prod(p, lo[pos(c)]);
                }
            }
            acc.value()
        })
    };
    let solver = RefinedSolver::new(MMatrixLu::new(m, off, defect), residual, "hitting times");
    let h = solver.solve(&DVector::from_fn(m, |row, _| cost[others[row]]))?;
    let mut ret = Dot2::new(cost[i]);
    for (c, p) in chain.row_entries(i) {
        if c != i {
            ret.add_scaled(p, h.get(pos(c)));
        }
    }
    let mut times = vec![0.0; n];
    let mut times_lo = vec![0.0; n];
    for (row, &j) in others.iter().enumerate() {
        times[j] = h.hi[row];
        times_lo[j] = h.lo[row];
    }
    let r = ret.value();
    times[i] = r;
    times_lo[i] = (ret - Dot2::new(r)).value();
    let max = times.iter().copied().fold(0.0, f64::max);
    Ok(Hitting { times, times_lo, max })
}

/// Result of propagating the sub-probability mass of walks from `i` that
/// have not yet returned.
#[derive(Clone, Debug)]
pub struct Taboo {
    /// `tail[k] = P_i(T_i > k)` for `k = 0..=steps`.
    pub tail: Vec<f64>,
    /// Mass on each state after the last step; zero at the anchor.
    pub mass: Vec<f64>,
    /// Expected visits to each state over steps `1..=steps` before returning.
    /// The anchor entry counts returns.
    pub visits: Vec<f64>,
}

/// Holding probability of each state taken as the complement of its
/// off-diagonal mass, so that every row is exactly stochastic. The stationary
/// solver reads only off-diagonal entries, and the other operators must agree
/// with it on badly conditioned chains.
fn holding(chain: &FiniteChain) -> Vec<f64> {
    (0..chain.len())
        .map(|r| {
            let out: f64 = chain.row_entries(r).filter(|&(c, _)| c != r).map(|(_, p)| p).sum();
            (1.0 - out).max(0.0)
        })
        .collect()
}

fn taboo_step(chain: &FiniteChain, hold: &[f64], i: usize, m: &[f64], next: &mut [f64]) -> f64 {
    next.iter_mut().for_each(|v| *v = 0.0);
    let mut returned = 0.0;
    for (r, &w) in m.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let mut route = |c: usize, p: f64| {
            if c == i {
                returned += w * p;
            } else {
                next[c] += w * p;
            }
        };
        for (c, p) in chain.row_entries(r).filter(|&(c, _)| c != r) {
            route(c, p);
        }
        route(r, hold[r]);
    }
    returned
}

/// Runs the taboo recursion for `steps` steps (or until `stop` holds on the
/// current tail value).
fn taboo_run(chain: &FiniteChain, i: usize, steps: usize, stop: impl Fn(f64) -> bool) -> Taboo {
    let n = chain.len();
    let mut m = vec![0.0; n];
    m[i] = 1.0;
    let mut next = vec![0.0; n];
    let mut visits = vec![0.0; n];
    let hold = holding(chain);
    let mut tail = Vec::with_capacity(steps.min(1 << 20) + 1);
    tail.push(1.0);
    for _ in 0..steps {
        let returned = taboo_step(chain, &hold, i, &m, &mut next);
        std::mem::swap(&mut m, &mut next);
        visits[i] += returned;
        for (v, &w) in visits.iter_mut().zip(&m) {
            *v += w;
        }
        let t: f64 = m.iter().sum();
        tail.push(t);
        if stop(t) {
            break;
        }
    }
    Taboo { tail, mass: m, visits }
}

pub fn taboo(chain: &FiniteChain, i: usize, steps: usize) -> Taboo {
    taboo_run(chain, i, steps, |_| false)
}

/// `P_i(T_i > k)` for `k = 0..=k_max`.
pub fn return_tail(chain: &FiniteChain, i: usize, k_max: usize) -> Vec<f64> {
    taboo(chain, i, k_max).tail
}

#[derive(Clone, Debug, Serialize)]
pub struct TailHorizon {
    pub tail: Vec<f64>,
    /// Tail value at the last computed step.
    pub residual: f64,
    /// True if the step cap was hit before the tail fell below the tolerance.
    pub capped: bool,
}

/// Extends the tail until it drops below `tol` or `max_steps` is reached.
pub fn return_tail_until(chain: &FiniteChain, i: usize, tol: f64, max_steps: usize) -> TailHorizon {
    let tail = taboo_run(chain, i, max_steps, |t| t < tol).tail;
    let residual = *tail.last().expect("tail has k = 0");
    TailHorizon { capped: residual >= tol, residual, tail }
}

/// `E_i[min(T_i, theta)] = sum_{k < theta} P_i(T_i > k)`.
pub fn truncated_return_mean(tail: &[f64], theta: usize) -> Result<f64> {
    if theta == 0 || theta > tail.len() {
        return Err(invalid(format!("theta {theta} outside 1..={}", tail.len())));
    }
    Ok(tail[..theta].iter().sum())
}

/// Distribution of the position at step `theta` given no return by then.
pub fn survivor_distribution(chain: &FiniteChain, i: usize, theta: u64) -> Result<Vec<f64>> {
    let run = taboo(chain, i, theta as usize);
    normalized_survivors(&run, theta)
}

fn normalized_survivors(run: &Taboo, theta: u64) -> Result<Vec<f64>> {
    let t = *run.tail.last().expect("tail has k = 0");
    if !(t > 0.0) {
        return Err(Error::UndefinedConditional { theta });
    }
    Ok(run.mass.iter().map(|&m| m / t).collect())
}

/// `Gamma_i = sum_q surv(q) (Z_ii - Z_qi)`.
pub fn gamma_i(survivors: &[f64], z: &Fundamental, i: usize) -> f64 {
    survivor_weighted_diff(survivors, z, i, i)
}

/// `sum_q surv(q) (Z_aj - Z_qj)`.
fn survivor_weighted_diff(survivors: &[f64], z: &Fundamental, a: usize, j: usize) -> f64 {
    let mut acc = Dot2::default();
    for (q, &s) in survivors.iter().enumerate() {
        if s != 0.0 {
            acc.add_prod(s, z.col_diff(a, q, j));
        }
    }
    acc.value()
}

/// `E_i[F_j]`, the expected visits to `j` per return cycle of `i`.
pub fn expected_visits(pi: &[f64], i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        pi[j] / pi[i]
    }
}

/// Expected visits to `j` over steps `1..=min(T_i, theta)`.
pub fn truncated_expected_visits(chain: &FiniteChain, i: usize, j: usize, theta: u64) -> f64 {
    taboo(chain, i, theta as usize).visits[j]
}

/// Exact truncation-bias quantities of one anchor at one threshold.
#[derive(Clone, Debug, Serialize)]
pub struct BiasTerms {
    pub theta: u64,
    pub tail: f64,
    pub truncated_mean: f64,
    pub gamma: f64,
    /// `E_i[F-hat_j]` for every state.
    pub truncated_visits: Vec<f64>,
    /// Survivor distribution at `theta`.
    pub survivors: Vec<f64>,
    /// `sum_q surv(q) (Z_ij - Z_qj)` for every state `j`.
    pub observer_offsets: Vec<f64>,
}

/// Everything the exact bias identities need, from one taboo pass.
pub fn bias_terms(chain: &FiniteChain, z: &Fundamental, i: usize, theta: u64) -> Result<BiasTerms> {
    let run = taboo(chain, i, theta as usize);
    let surv = normalized_survivors(&run, theta)?;
    let observer_offsets = (0..chain.len()).map(|j| survivor_weighted_diff(&surv, z, i, j)).collect();
    Ok(BiasTerms {
        theta,
        tail: run.tail[theta as usize],
        truncated_mean: truncated_return_mean(&run.tail, theta as usize)?,
        gamma: gamma_i(&surv, z, i),
        truncated_visits: run.visits,
        survivors: surv,
        observer_offsets,
    })
}

/// Oracle quantities for a whole chain.
#[derive(Clone, Debug)]
pub struct OracleTable {
    pub keys: Vec<StateId>,
    pub pi: Vec<f64>,
    pub pi_residual: f64,
    pub fundamental: Fundamental,
    /// `H_i` for every state, from the fundamental matrix.
    pub hitting_max: Vec<f64>,
    pub z_max: Vec<f64>,
    /// States kept when a countable chain was truncated.
    pub truncation_cap: Option<usize>,
    pub chain: FiniteChain,
}

impl OracleTable {
    pub fn build(chain: &FiniteChain, config: &OracleConfig) -> Result<Self> {
        let st = stationary_exact_with(chain, config)?;
        let fundamental = fundamental_matrix_with(chain, &st.pi, config)?;
        let n = chain.len();
        let hitting_max = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if j == i { 1.0 / st.pi[i] } else { fundamental.col_diff(i, j, i) / st.pi[i] })
                    .fold(0.0, f64::max)
            })
            .collect();
        let z_max = (0..n).map(|i| z_max(&fundamental.z, i)).collect();
        Ok(OracleTable {
            keys: chain.keys(),
            pi: st.pi,
            pi_residual: st.residual,
            fundamental,
            hitting_max,
            z_max,
            truncation_cap: None,
            chain: chain.clone(),
        })
    }

    /// Builds for a finite chain directly, or for a countable chain through
    /// its state-space truncation.
    pub fn for_handle(chain: &ChainHandle, config: &OracleConfig) -> Result<Self> {
        match chain {
            ChainHandle::Finite(c) => Self::build(c, config),
            ChainHandle::Countable(m) => {
                let (finite, cap) = m
                    .truncate(BOUNDARY_TOL)
                    .ok_or_else(|| invalid(format!("no finite truncation available for {}", m.name())))??;
                let mut table = Self::build(&finite, config)?;
                table.truncation_cap = Some(cap);
                Ok(table)
            }
        }
    }

    pub fn index(&self, s: StateId) -> Result<usize> {
        self.chain.index_of(s).ok_or(Error::InvalidState(s))
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.fundamental.z
    }

    /// `E_j[T_i]` for every `j` from `(Z_ii - Z_ji) / pi_i`.
    pub fn hitting_from_z(&self, i: usize) -> Vec<f64> {
        (0..self.pi.len())
            .map(|j| if j == i { 1.0 / self.pi[i] } else { self.fundamental.col_diff(i, j, i) / self.pi[i] })
            .collect()
    }
}
