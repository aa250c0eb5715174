//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always print. Criteria
//! listed in `KNOWN_FAILURES` are expected to print FAIL; the process exits
//! nonzero if any other criterion fails or a known failure starts passing.
//! Set `ACCEPTANCE_STRICT=1` to exit nonzero on any FAIL, and
//! `ACCEPTANCE_ONLY=1,7` to run a subset.

use std::process::ExitCode;
use std::time::Instant;

use locostat::bounds::{
    countable_error_bound, error_bound_anchor, hajek_constants, r_i, tail_bound_countable, tail_bound_finite,
    AnchorMode, CountableMode,
};
use locostat::chain::{
    build_clique, build_clique_cycle, build_magnet, build_mm1, build_pagerank, build_personalized_pagerank, gen_config_model, ChainHandle,
    FiniteChain, Mm1, StateId, TransitionRow,
};
use locostat::distsim::run_distributed;
use locostat::estimator::{self, initial_sample_count, next_sample_count, EstimateReport, EstimatorParams, Termination};
use locostat::experiment::{beta_sweep, median, spearman, spread_anchors, BetaSweepConfig};
use locostat::oracle::{
    bias_terms, censored_hitting_max, expected_hitting_with, return_tail, truncated_return_mean, OracleConfig,
    OracleTable,
};
use locostat::rng::substream;
use locostat::sampler::{sample_batch, sample_return, ObserverSet, Parallelism, Substreams};

/// Criteria whose stated check cannot hold; see the notes printed with them.
const KNOWN_FAILURES: [u32; 3] = [1, 7, 8];

const DELTA: f64 = 0.02;
const EPS: f64 = 0.15;
const ALPHA: f64 = 0.2;
const RUNS: u64 = 200;
const THETAS: [u64; 6] = [2, 4, 8, 16, 32, 64];

const PR_NODES: usize = 100;
const PR_BETA: f64 = 0.15;
const GRAPH_EXPONENT: f64 = 2.5;
const GRAPH_MIN_DEGREE: usize = 2;
const PR_SEED: u64 = 2013;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Locality of every estimator run made by the suite.
#[derive(Default)]
struct Locality {
    runs: u64,
    violations: Vec<String>,
}

impl Locality {
    fn record(&mut self, r: &EstimateReport) {
        self.runs += 1;
        let p = &r.params;
        let limit = 2.0 / (p.eps * p.delta);
        let t_limit = limit.log2().ceil() as u32;
        if r.theta_final() as f64 >= limit || r.t_max > t_limit {
            self.violations.push(format!(
                "anchor {} seed {}: t_max {} theta {} (limit {limit:.1})",
                r.anchor,
                p.seed,
                r.t_max,
                r.theta_final()
            ));
        }
    }
}

fn params(seed: u64) -> EstimatorParams {
    EstimatorParams::new(DELTA, EPS, ALPHA, seed).expect("valid parameters")
}

/// `(1-alpha) n - 3 sigma` for a binomial count with success rate `1-alpha`.
fn lower_count(n: u64) -> f64 {
    let n = n as f64;
    (1.0 - ALPHA) * n - 3.0 * (n * ALPHA * (1.0 - ALPHA)).sqrt()
}

fn two_state() -> FiniteChain {
    let row = TransitionRow::new(vec![(StateId(0), 0.5), (StateId(1), 0.5)]);
    FiniteChain::from_rows(0, vec![row.clone(), row]).unwrap()
}

fn pagerank100() -> ChainHandle {
    let adj = gen_config_model(PR_NODES, GRAPH_EXPONENT, GRAPH_MIN_DEGREE, PR_SEED).unwrap();
    build_pagerank(&adj, PR_BETA).unwrap()
}

fn finite_chains() -> Vec<(&'static str, FiniteChain)> {
    let fin = |c: ChainHandle| c.as_finite().unwrap().clone();
    vec![
        ("two-state", two_state()),
        ("clique K20", fin(build_clique(20).unwrap())),
        ("clique-cycle(20,5,0.1)", fin(build_clique_cycle(20, 5, 0.1).unwrap())),
        ("magnet(0.3,0.3,25,50)", fin(build_magnet(0.3, 0.3, 25, 50).unwrap())),
        ("pagerank100", fin(pagerank100())),
        ("mm1(0.3) cap 200", Mm1::new(0.3).unwrap().truncated(200).unwrap()),
    ]
}

fn oracle_config() -> OracleConfig {
    OracleConfig::default()
}

#[derive(Default)]
struct Worst {
    value: f64,
    at: String,
}

impl Worst {
    fn see(&mut self, v: f64, at: impl FnOnce() -> String) {
        if v > self.value || v.is_nan() {
            self.value = v;
            self.at = at();
        }
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let cfg = oracle_config();
    let mut residual = Worst::default();
    let mut ret = Worst::default();
    let mut fund = Worst::default();
    let mut rate = Worst::default();
    let mut tilde = Worst::default();
    let mut obs_printed = Worst::default();
    let mut obs = Worst::default();
    for (name, chain) in finite_chains() {
        let table = OracleTable::build(&chain, &cfg).unwrap();
        let n = chain.len();
        residual.see(table.pi_residual, || name.to_string());
        for k in 0..n {
            let h = expected_hitting_with(&chain, k, &cfg).unwrap();
            let pk = table.pi[k];
            ret.see((h.times[k] * pk - 1.0).abs(), || format!("{name} i={k}"));
            for j in 0..n {
                if j == k {
                    continue;
                }
                let zdiff = table.fundamental.col_diff(k, j, k);
                let err = (pk * h.times[j] - zdiff).abs() / zdiff.abs().max(1.0);
                fund.see(err, || format!("{name} j={j} k={k}"));
            }
            for theta in THETAS {
                let b = bias_terms(&chain, &table.fundamental, k, theta).unwrap();
                let scale = b.tail / b.truncated_mean;
                let rate_err = (1.0 / b.truncated_mean - pk - scale * b.gamma).abs();
                rate.see(rate_err, || format!("{name} i={k} theta={theta}"));
                let tilde_err = ((1.0 - b.tail) / b.truncated_mean - pk - scale * (b.gamma - 1.0)).abs();
                tilde.see(tilde_err, || format!("{name} i={k} theta={theta}"));
                for j in (0..n).filter(|&j| j != k) {
                    // the offsets sum Z differences up to 1e8 on Magnet, so
                    // the check is relative to the size of the summed terms
                    let size: f64 = (0..n)
                        .filter(|&q| b.survivors[q] != 0.0)
                        .map(|q| b.survivors[q] * table.fundamental.col_diff(k, q, j).abs())
                        .sum();
                    let norm = (scale * (size + b.survivors[j])).max(1.0);
                    let lhs = b.truncated_visits[j] / b.truncated_mean - table.pi[j];
                    let printed = (lhs - scale * b.observer_offsets[j]).abs() / norm;
                    obs_printed.see(printed, || format!("{name} i={k} j={j} theta={theta}"));
                    let corrected = (lhs - scale * (b.observer_offsets[j] + b.survivors[j])).abs() / norm;
                    obs.see(corrected, || format!("{name} i={k} j={j} theta={theta}"));
                }
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let checks = [
        ("pi residual", residual.value < 1e-10, &residual, 1e-10),
        ("E_i[T_i] pi_i - 1", ret.value < 1e-9, &ret, 1e-9),
        ("hitting vs Z (relative)", fund.value < 1e-8, &fund, 1e-8),
        ("return-rate bias", rate.value < 1e-9, &rate, 1e-9),
        ("tilde bias", tilde.value < 1e-9, &tilde, 1e-9),
        ("observer bias as stated (relative)", obs_printed.value < 1e-9, &obs_printed, 1e-9),
        ("observer bias with + tail*surv_j/E[T^] (relative)", obs.value < 1e-9, &obs, 1e-9),
    ];
    let mut lines = Vec::new();
    for (label, ok, w, tol) in &checks {
        lines.push(format!("    {} {label}: worst {:.2e} (tol {tol:.0e}) at {}", if *ok { "ok  " } else { "FAIL" }, w.value, w.at));
    }
    let stated_ok = checks.iter().all(|c| c.1) && elapsed < 30.0;
    lines.push(format!(
        "    runtime {elapsed:.1}s (limit 30s); the observer identity as stated omits the survivor mass at j, \
         which the corrected form restores"
    ));
    outcome(stated_ok, lines.join("\n"))
}

fn criterion_2() -> Outcome {
    let cfg = oracle_config();
    let mut worst = Worst::default();
    for n in [20, 30, 48] {
        for (k, eps) in [(4, 0.05), (5, 0.1), (8, 0.3)] {
            let c = build_clique_cycle(n, k, eps).unwrap();
            let f = c.as_finite().unwrap();
            let h = expected_hitting_with(f, 0, &cfg).unwrap().times[0];
            let closed = (1.0 - 2.0 * eps) * k as f64 + 2.0 * eps * n as f64;
            worst.see((h - closed).abs(), || format!("n={n} k={k} eps={eps}: {h} vs {closed}"));
        }
    }
    outcome(worst.value < 1e-9, format!("    9 grid points, worst |E_0[T_0] - closed form| {:.2e} at {}", worst.value, worst.at))
}

fn mm1_r0(h_b: f64) -> f64 {
    let (gamma, nu) = (0.4, 1.0);
    let consts = hajek_constants(gamma, nu).unwrap();
    r_i(h_b, &consts, nu).unwrap()
}

fn criterion_3() -> Outcome {
    let cfg = oracle_config();
    let mut finite_ok = true;
    let mut worst_ratio = Worst::default();
    for (name, chain) in finite_chains() {
        let table = OracleTable::build(&chain, &cfg).unwrap();
        for i in 0..chain.len() {
            let tail = return_tail(&chain, i, 200);
            for (k, &t) in tail.iter().enumerate() {
                let b = tail_bound_finite(table.hitting_max[i], k as u64).unwrap().clipped;
                if t > b * (1.0 + 1e-12) {
                    finite_ok = false;
                }
                if b > 0.0 {
                    worst_ratio.see(t / b, || format!("{name} i={i} k={k}"));
                }
            }
        }
    }

    // B = {0} for V(x) = x and b = 0; the chain watched on a single state
    // returns in one visit.
    let truncated = Mm1::new(0.3).unwrap().truncated(200).unwrap();
    let h_b = censored_hitting_max(&truncated, &[0], 0, &cfg).unwrap();
    let r_censored = mm1_r0(h_b);
    let r_return = mm1_r0(7.0 / 4.0);
    let chain = build_mm1(0.3).unwrap();
    let mut rng = substream(3, 0, 0);
    let samples = 1_000_000u64;
    let k_max = 500u64;
    let mut exceed = vec![0u64; k_max as usize + 1];
    for _ in 0..samples {
        let w = sample_return(&chain, StateId(0), k_max + 1, &[], &mut rng).unwrap();
        // T > k for k < length, and for every k when truncated
        let above = if w.truncated { k_max + 1 } else { w.length };
        for e in exceed.iter_mut().take(above as usize) {
            *e += 1;
        }
    }
    let mut mc_ok = [true, true];
    let mut tightest = f64::INFINITY;
    for (k, &e) in exceed.iter().enumerate() {
        let p = e as f64 / samples as f64;
        for (slot, r) in [r_censored, r_return].into_iter().enumerate() {
            let b = tail_bound_countable(r, k as u64).unwrap().clipped;
            mc_ok[slot] &= p <= b;
            if slot == 0 {
                tightest = tightest.min(b - p);
            }
        }
    }
    let pass = finite_ok && mc_ok[0] && mc_ok[1];
    outcome(
        pass,
        format!(
            "    finite chains, every anchor, k <= 200: {} (largest tail/bound {:.3} at {})\n    \
             MM1 MC tail, 1e6 samples, k <= 500: H^B = {h_b} gives R_0 = {r_censored:.1}: {}; \
             H^B = 7/4 gives R_0 = {r_return:.1}: {}; smallest slack {tightest:.3}",
            if finite_ok { "ok" } else { "violated" },
            worst_ratio.value,
            worst_ratio.at,
            if mc_ok[0] { "ok" } else { "violated" },
            if mc_ok[1] { "ok" } else { "violated" },
        ),
    )
}

fn criterion_4(locality: &mut Locality) -> Outcome {
    let chain = pagerank100();
    let table = OracleTable::for_handle(&chain, &oracle_config()).unwrap();
    let need = lower_count(RUNS);
    let (mut lower_bad, mut bit_bad, mut bound_bad) = (Vec::new(), Vec::new(), Vec::new());
    let (mut min_lower, mut min_bit) = (RUNS, RUNS);
    let (mut b_runs, mut min_bound_share) = (0, 1.0f64);
    let mut high = 0;
    for (ix, &anchor) in table.keys.iter().enumerate() {
        let pi = table.pi[ix];
        let bound = error_bound_anchor(EPS, 1, 1.0, table.z_max[ix], AnchorMode::TerminatedB).unwrap().clipped;
        let (mut lower, mut bit, mut stopped_b, mut within) = (0, 0, 0, 0);
        for seed in 0..RUNS {
            let r = estimator::run(&chain, anchor, &params(seed), &ObserverSet::None).unwrap();
            locality.record(&r);
            lower += (r.pi_hat_final >= pi / (1.0 + EPS)) as u64;
            bit += (r.decision_bit == 1) as u64;
            // the bound is only claimed for runs stopped by condition (b)
            if r.termination == Termination::ConditionB {
                stopped_b += 1;
                within += ((r.pi_hat_final - pi).abs() / r.pi_hat_final <= bound) as u64;
            }
        }
        min_lower = min_lower.min(lower);
        b_runs += stopped_b;
        if stopped_b > 0 {
            min_bound_share = min_bound_share.min(within as f64 / stopped_b as f64);
        }
        if (lower as f64) < need {
            lower_bad.push(anchor);
        }
        if (within as f64) < lower_count(stopped_b) {
            bound_bad.push(anchor);
        }
        if pi >= DELTA {
            high += 1;
            min_bit = min_bit.min(bit);
            if (bit as f64) < need {
                bit_bad.push(anchor);
            }
        }
    }
    let pass = lower_bad.is_empty() && bit_bad.is_empty() && bound_bad.is_empty();
    outcome(
        pass,
        format!(
            "    threshold {need:.2} of {RUNS} runs, {} anchors ({high} with pi >= delta)\n    \
             (i) pi_hat >= pi/(1+eps): min {min_lower}, failing {:?}\n    \
             (ii) bit 1 when pi >= delta: min {min_bit}, failing {:?}\n    \
             (iii) rel. error <= min(1, eps(3 Z_max + 1)) over {b_runs} runs stopped by (b): \
             lowest per-anchor share {min_bound_share:.3}, failing {:?}",
            table.keys.len(),
            lower_bad,
            bit_bad,
            bound_bad
        ),
    )
}

fn criterion_5(locality: &Locality) -> Outcome {
    let detail = if locality.violations.is_empty() {
        format!("    {} runs, theta(t_max) < 2/(eps delta) and t_max <= ceil(log2(2/(eps delta))) in all", locality.runs)
    } else {
        format!("    {} runs, {} violations: {:?}", locality.runs, locality.violations.len(), &locality.violations[..5.min(locality.violations.len())])
    };
    outcome(locality.violations.is_empty() && locality.runs > 0, detail)
}

fn criterion_6(locality: &mut Locality) -> Outcome {
    let chain = build_mm1(0.3).unwrap();
    let pi = 4.0 / 7.0;
    let truncated = Mm1::new(0.3).unwrap().truncated(200).unwrap();
    let h_b = censored_hitting_max(&truncated, &[0], 0, &oracle_config()).unwrap();
    let rates = [mm1_r0(h_b), mm1_r0(7.0 / 4.0)];
    let mut within = [0u64; 2];
    let mut errors = Vec::new();
    let mut bounds = Vec::new();
    for seed in 0..RUNS {
        let r = estimator::run(&chain, StateId(0), &params(seed), &ObserverSet::None).unwrap();
        locality.record(&r);
        let err = (r.pi_hat_final - pi).abs() / r.pi_hat_final;
        errors.push(err);
        for (slot, &rate) in rates.iter().enumerate() {
            let b = countable_error_bound(EPS, r.theta_final(), rate, pi, CountableMode::Anchor).unwrap();
            if slot == 0 {
                bounds.push(b.raw);
            }
            within[slot] += (err <= b.clipped) as u64;
        }
    }
    let need = lower_count(RUNS);
    let pass = within.iter().all(|&w| w as f64 >= need);
    outcome(
        pass,
        format!(
            "    within bound: {} (R_0 = {:.1}), {} (R_0 = {:.1}) of {RUNS}, need {need:.2}; \
             median rel. error {:.4}, median raw bound {:.1}",
            within[0],
            rates[0],
            within[1],
            rates[1],
            median(&errors).unwrap(),
            median(&bounds).unwrap()
        ),
    )
}

fn criterion_7(locality: &mut Locality) -> Outcome {
    let (n1, n2) = (25, 50);
    let chain = build_magnet(0.3, 0.3, n1, n2).unwrap();
    let table = OracleTable::for_handle(&chain, &oracle_config()).unwrap();
    let pi1 = table.pi[table.index(StateId(1)).unwrap()];
    let observers = ObserverSet::Listed(table.keys.clone());
    let mut ratios = Vec::new();
    let mut right: Vec<Vec<f64>> = vec![Vec::new(); n2 - n1];
    for seed in 0..50 {
        let r = estimator::run(&chain, StateId(1), &params(seed), &observers).unwrap();
        locality.record(&r);
        ratios.push(r.pi_hat_final / pi1);
        for (slot, s) in (n1 + 1..=n2).enumerate() {
            right[slot].push(r.pi_tilde_of(StateId(s as u64)).unwrap());
        }
    }
    let m = median(&ratios).unwrap();
    // walks from state 1 that never cross n1 see only the left half, so
    // pi_hat tends to pi_1 over the left-half mass
    let left: f64 = table.pi[..n1].iter().sum();
    let right_medians: Vec<f64> = right.iter().map(|v| median(v).unwrap()).collect();
    let worst_right = right_medians.iter().cloned().fold(0.0, f64::max);
    let pass = (1.5..=2.5).contains(&m) && worst_right == 0.0;
    outcome(
        pass,
        format!(
            "    median pi_hat_1/pi_1 = {m:.3} over 50 runs (target [1.5, 2.5]); largest median observer estimate \
             for states > {n1}: {worst_right:e}\n    states 1..={n1} carry {left:.4} of the mass, so a walk confined \
             to them predicts a ratio of {:.3}; the even split at n1 leaves the right half heavier",
            1.0 / left
        ),
    )
}

fn criterion_8() -> Outcome {
    let n1 = initial_sample_count(0.15, 0.2).unwrap();
    let next = next_sample_count(4, 1.5, 0.15, 0.2).unwrap();
    // independent evaluations of the two formulas
    let n1_ref = (6.0 * 1.15 * 40f64.ln() / 0.0225).ceil() as u64;
    let next_ref = (3.0 * 1.15 * 4.0 * 80f64.ln() / (1.5 * 0.0225)).ceil() as u64;
    let fixtures_ok = n1 == 1132 && n1 == n1_ref && next == 1792 && next == next_ref;
    let stated_ok = n1 == 1132 && next == 1225;
    outcome(
        stated_ok && fixtures_ok,
        format!(
            "    initial_sample_count(0.15, 0.2) = {n1} (expected 1132, independent {n1_ref})\n    \
             next_sample_count(4, 1.5, 0.15, 0.2) = {next} (expected 1225, independent {next_ref}); \
             1225 is what ln(theta/alpha) = ln 20 gives in place of ln(4 theta/alpha) = ln 80"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (name, chain) in finite_chains() {
        let handle: ChainHandle = chain.clone().into();
        let anchor = chain.key(0);
        let observers = chain.keys();
        for n in [1, 10, 1000] {
            let streams = Substreams { seed: 9, iteration: n };
            let dist = run_distributed(&handle, anchor, 64, n, &observers, streams).unwrap();
            let seq = sample_batch(&handle, anchor, 64, n, &observers, streams, Parallelism::Sequential).unwrap();
            compared += 1;
            if dist.stats != seq || dist.messages_forwarded != seq.total_steps {
                mismatches.push(format!("{name} N={n}"));
            }
        }
    }
    outcome(mismatches.is_empty(), format!("    {compared} batches compared field by field, mismatches {mismatches:?}"))
}

fn criterion_10() -> Outcome {
    let n = 50;
    let c = build_clique(n).unwrap();
    let f = c.as_finite().unwrap();
    let tail = return_tail(f, 0, 64);
    let nf = n as f64;
    let (mut exact, mut approx) = (Worst::default(), Worst::default());
    for theta in 1..=64usize {
        let gap = 1.0 - truncated_return_mean(&tail, theta).unwrap() / nf;
        let closed = ((nf - 2.0) / (nf - 1.0)).powi(theta as i32 - 1) * (nf - 1.0) / nf;
        let expo = (-(theta as f64 - 1.0) / (nf - 1.0)).exp() * (nf - 1.0) / nf;
        exact.see((gap - closed).abs(), || format!("theta={theta}"));
        approx.see((expo - gap).abs() / gap, || format!("theta={theta}"));
    }
    outcome(
        exact.value < 1e-9 && approx.value < 0.05,
        format!(
            "    n = 50, theta 1..=64: exact form worst {:.2e} at {}; exponential form worst relative {:.4} at {}",
            exact.value, exact.at, approx.value, approx.at
        ),
    )
}

fn criterion_11(locality: &mut Locality) -> Outcome {
    let adj = gen_config_model(500, GRAPH_EXPONENT, GRAPH_MIN_DEGREE, PR_SEED).unwrap();
    let cfg = oracle_config();
    let anchors = spread_anchors(&adj, PR_BETA, 4, &cfg).unwrap();
    let betas = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];
    let run = BetaSweepConfig { seed: 11, ..BetaSweepConfig::default() };
    let rows = beta_sweep(&adj, &anchors, &betas, &run, &cfg).unwrap();
    let unresolved = (run.walk_steps + run.checkpoint) as f64;
    let steps = |r: &locostat::experiment::BetaRow| r.steps_needed.map_or(unresolved, |s| s as f64);

    let lowest = *anchors.last().unwrap();
    let low_rows: Vec<_> = rows.iter().filter(|r| r.anchor == lowest).collect();
    let monotone = low_rows.windows(2).all(|w| steps(w[1]) <= steps(w[0]));
    let rho = spearman(&rows.iter().map(steps).collect::<Vec<_>>(), &rows.iter().map(|r| r.expected_return_time).collect::<Vec<_>>());
    let pass = monotone && rho.is_some_and(|r| r > 0.0);
    let mut lines = vec![format!(
        "    anchors {:?} by decreasing PageRank; lowest-pi anchor steps non-increasing in beta: {monotone}; spearman {:.3}",
        anchors.iter().map(|a| a.0).collect::<Vec<_>>(),
        rho.unwrap_or(f64::NAN)
    )];
    for a in &anchors {
        let cells: Vec<String> = rows
            .iter()
            .filter(|r| r.anchor == *a)
            .map(|r| format!("{}:{}", r.beta, r.steps_needed.map_or("-".into(), |s| s.to_string())))
            .collect();
        lines.push(format!("      node {:>3}: {}", a.0, cells.join(" ")));
    }
    // the estimator on the beta = 0.15 chain of each anchor, against the oracle
    let mut cross = Vec::new();
    for &a in &anchors {
        let chain = build_personalized_pagerank(&adj, PR_BETA, a).unwrap();
        let pi = {
            let t = OracleTable::for_handle(&chain, &cfg).unwrap();
            t.pi[t.index(a).unwrap()]
        };
        let r = estimator::run(&chain, a, &params(11), &ObserverSet::None).unwrap();
        locality.record(&r);
        cross.push(format!("{}: pi_hat {:.4} vs pi {:.4}", a.0, r.pi_hat_final, pi));
    }
    lines.push(format!("    estimator at beta = {PR_BETA}: {}", cross.join(", ")));
    outcome(pass, lines.join("\n"))
}

fn main() -> ExitCode {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut locality = Locality::default();
    let mut results: Vec<(u32, Outcome, f64)> = Vec::new();
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut timed = |n: u32, f: &mut dyn FnMut() -> Outcome| {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            return;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {n}: {} ({secs:.1}s)\n{}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o, secs));
    };
    timed(1, &mut criterion_1);
    timed(2, &mut criterion_2);
    timed(3, &mut criterion_3);
    timed(4, &mut || criterion_4(&mut locality));
    timed(6, &mut || criterion_6(&mut locality));
    timed(7, &mut || criterion_7(&mut locality));
    timed(8, &mut criterion_8);
    timed(9, &mut criterion_9);
    timed(10, &mut criterion_10);
    timed(11, &mut || criterion_11(&mut locality));
    // every estimator run above, checked for locality last
    timed(5, &mut || criterion_5(&locality));

    results.sort_by_key(|r| r.0);
    println!("\nsummary");
    let mut unexpected = Vec::new();
    for (n, o, _) in &results {
        let known = KNOWN_FAILURES.contains(n);
        let note = match (o.pass, known) {
            (false, true) => " (known deviation)",
            (true, true) => " (listed as known failure but passed)",
            _ => "",
        };
        println!("criterion {n}: {}{note}", if o.pass { "PASS" } else { "FAIL" });
        if o.pass == known || (strict && !o.pass) {
            unexpected.push(*n);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcomes for criteria {unexpected:?}");
        ExitCode::FAILURE
    }
}
