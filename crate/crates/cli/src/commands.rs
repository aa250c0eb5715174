use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use locostat::bounds::{
    countable_error_bound, default_frontier_depth, error_bound_anchor, error_bound_tilde,
    foster_check, hajek_constants, r_i, step_bounds, tail_bound_countable, tail_bound_finite, AnchorMode, Bound,
    CountableMode, FosterReport, HajekConstants, LyapunovSpec, StepBounds, TailRate,
};
use locostat::chain::{validate, ChainHandle, StateId};
use locostat::distsim::{estimate_distributed, IterationRounds};
use locostat::estimator::{self, EstimateReport};
use locostat::experiment::{
    beta_sweep, rank_by_pi, reproduce_anchors, reproduce_observers, reproduce_stats, spread_anchors, sweep_delta,
    BetaSweepConfig,
};
use locostat::oracle::{censored_hitting_max, return_tail, OracleConfig, OracleTable};
use serde::Serialize;

use crate::args::*;
use crate::error::{config, CliError, CliResult};

fn sink(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

fn io_err(path: Option<&Path>) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.map_or("<stdout>".into(), |p| p.display().to_string()), source }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(sink(path)?);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

fn write_rows<T: Serialize>(out: &OutArgs, default: Format, rows: &[T]) -> CliResult<()> {
    match out.format.unwrap_or(default) {
        Format::Csv => write_csv(out.out.as_deref(), rows),
        Format::Json => write_json(out.out.as_deref(), &rows),
    }
}

/// Sets the global sampling pool; later calls keep the first size.
fn set_workers(workers: usize) {
    if workers > 1 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

#[derive(Serialize)]
struct TraceRow {
    t: u32,
    theta: u64,
    #[serde(rename = "N")]
    n: u64,
    #[serde(rename = "T_hat")]
    t_hat: f64,
    p_hat: f64,
    pi_hat: f64,
    steps: u64,
}

fn trace_rows(report: &EstimateReport) -> Vec<TraceRow> {
    report
        .trace
        .iter()
        .map(|r| TraceRow { t: r.t, theta: r.theta, n: r.n, t_hat: r.t_hat, p_hat: r.p_hat, pi_hat: r.pi_hat, steps: r.steps })
        .collect()
}

fn emit_report(args: &EstimateArgs, report: &EstimateReport) -> CliResult<()> {
    if let Some(path) = &args.trace {
        write_csv(Some(path), &trace_rows(report))?;
    }
    match args.out.format.unwrap_or(Format::Json) {
        Format::Json => write_json(args.out.out.as_deref(), report),
        Format::Csv => write_csv(args.out.out.as_deref(), &trace_rows(report)),
    }
}

pub fn estimate(args: &EstimateArgs) -> CliResult<()> {
    let params = args.params.params()?;
    set_workers(args.params.workers);
    let anchor = StateId(args.anchor);
    let chain = args.chain.build(params.seed, Some(anchor))?;
    let observers = parse_observers(&args.observers)?;
    let report = estimator::run(&chain, anchor, &params, &observers)?;
    emit_report(args, &report)
}

#[derive(Serialize)]
struct RoundRow {
    t: u32,
    round: u64,
    messages: u64,
    returned: u64,
    in_flight: u64,
}

pub fn distsim(args: &DistsimArgs) -> CliResult<()> {
    let e = &args.estimate;
    let params = e.params.params()?;
    let anchor = StateId(e.anchor);
    let chain = e.chain.build(params.seed, Some(anchor))?;
    let observers = parse_observers(&e.observers)?;
    let (report, log) = estimate_distributed(&chain, anchor, &params, &observers)?;
    if let Some(path) = &args.rounds_log {
        let rows: Vec<RoundRow> = log
            .iter()
            .flat_map(|IterationRounds { t, rounds }| {
                rounds.iter().map(move |r| RoundRow {
                    t: *t,
                    round: r.round,
                    messages: r.messages,
                    returned: r.returned,
                    in_flight: r.in_flight,
                })
            })
            .collect();
        write_csv(Some(path), &rows)?;
    }
    emit_report(e, &report)
}

#[derive(Serialize)]
struct OracleRow {
    state: StateId,
    pi: f64,
    hitting_max: f64,
    z_max: f64,
}

#[derive(Serialize)]
struct OracleDump {
    chain: String,
    states: Vec<OracleRow>,
    pi_residual: f64,
    truncation_cap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    z: Option<Vec<Vec<f64>>>,
}

pub fn oracle(args: &OracleArgs) -> CliResult<()> {
    let chain = args.chain.build(args.seed, args.anchor.map(StateId))?;
    let table = OracleTable::for_handle(&chain, &OracleConfig::default())?;
    let states: Vec<OracleRow> = (0..table.keys.len())
        .map(|i| OracleRow { state: table.keys[i], pi: table.pi[i], hitting_max: table.hitting_max[i], z_max: table.z_max[i] })
        .collect();
    match args.out.format.unwrap_or(Format::Json) {
        Format::Csv => write_csv(args.out.out.as_deref(), &states),
        Format::Json => {
            let z = args.full_z.then(|| table.z().row_iter().map(|r| r.iter().copied().collect()).collect());
            let dump = OracleDump {
                chain: chain.describe(),
                states,
                pi_residual: table.pi_residual,
                truncation_cap: table.truncation_cap,
                z,
            };
            write_json(args.out.out.as_deref(), &dump)
        }
    }
}

#[derive(Serialize)]
struct ThetaBounds {
    theta: u64,
    /// Exact `P_i(T_i > theta)` from the oracle.
    tail_exact: f64,
    tail_bound: Bound,
    anchor: Bound,
    /// Present only where the exact tail is below 1/2.
    tilde: Option<Bound>,
}

#[derive(Serialize)]
struct CountableInfo {
    b: f64,
    nu_max: f64,
    gamma: f64,
    hajek: HajekConstants,
    restricted_hitting_max: f64,
    foster: FosterReport,
}

#[derive(Serialize)]
struct BoundsReport {
    anchor: StateId,
    eps: f64,
    delta: f64,
    alpha: f64,
    pi: f64,
    tail_rate: TailRate,
    z_max: Option<f64>,
    countable: Option<CountableInfo>,
    terminated_b: Option<Bound>,
    step_bounds: StepBounds,
    per_theta: Vec<ThetaBounds>,
}

pub fn bounds(args: &BoundsArgs) -> CliResult<()> {
    let p = args.params.params()?;
    let anchor = StateId(args.anchor);
    let chain = args.chain.build(p.seed, Some(anchor))?;
    let table = OracleTable::for_handle(&chain, &OracleConfig::default())?;
    let i = table.index(anchor)?;
    let pi = table.pi[i];
    let cap = p.iteration_cap();
    let thetas: Vec<u64> = (1..=cap).map(|t| 1u64 << t).collect();
    let tail = return_tail(&table.chain, i, *thetas.last().expect("cap >= 1") as usize);

    let (rate, countable, z_max) = match &chain {
        ChainHandle::Finite(_) => (TailRate::Finite { h: table.hitting_max[i] }, None, Some(table.z_max[i])),
        ChainHandle::Countable(_) => {
            let gamma = match (args.gamma, args.chain.chain) {
                (Some(g), _) => g,
                (None, ChainKind::Mm1) => 1.0 - 2.0 * args.chain.q1,
                _ => return Err(config("countable chains other than mm1 need --gamma")),
            };
            let spec = LyapunovSpec::linear(args.lyap_b, 1.0, gamma);
            let foster = foster_check(&chain, anchor, &spec, default_frontier_depth(args.lyap_b))?;
            let nu = foster.adjusted_nu_max.unwrap_or(spec.nu_max);
            let set: Vec<usize> = foster.finite_set.iter().map(|&s| table.index(s)).collect::<Result<_, _>>()?;
            let h_b = censored_hitting_max(&table.chain, &set, i, &OracleConfig::default())?;
            let hajek = hajek_constants(gamma, nu)?;
            let r = r_i(h_b, &hajek, nu)?;
            let info = CountableInfo { b: args.lyap_b, nu_max: nu, gamma, hajek, restricted_hitting_max: h_b, foster };
            (TailRate::Countable { r }, Some(info), None)
        }
    };

    let mut per_theta = Vec::new();
    for &theta in &thetas {
        let tail_exact = tail[theta as usize];
        let (tail_bound, anchor_b, tilde) = match rate {
            TailRate::Finite { h } => {
                let z = z_max.expect("finite chains carry Z_max");
                (
                    tail_bound_finite(h, theta)?,
                    error_bound_anchor(p.eps, theta, h, z, AnchorMode::Finite)?,
                    error_bound_tilde(p.eps, theta, h, z)?,
                )
            }
            TailRate::Countable { r } => (
                tail_bound_countable(r, theta)?,
                countable_error_bound(p.eps, theta, r, pi, CountableMode::Anchor)?,
                countable_error_bound(p.eps, theta, r, pi, CountableMode::Tilde)?,
            ),
        };
        per_theta.push(ThetaBounds {
            theta,
            tail_exact,
            tail_bound,
            anchor: anchor_b,
            tilde: (tail_exact < 0.5).then_some(tilde),
        });
    }
    let terminated_b = match z_max {
        Some(z) => Some(error_bound_anchor(p.eps, 1, 1.0, z, AnchorMode::TerminatedB)?),
        None => None,
    };
    let report = BoundsReport {
        anchor,
        eps: p.eps,
        delta: p.delta,
        alpha: p.alpha,
        pi,
        tail_rate: rate,
        z_max,
        countable,
        terminated_b,
        step_bounds: step_bounds(p.eps, p.delta, p.alpha, Some((rate, pi)))?,
        per_theta,
    };
    write_json(args.out.as_deref(), &report)
}

#[derive(Serialize)]
struct ValidateOutput {
    chain: String,
    valid: bool,
    #[serde(flatten)]
    report: locostat::chain::ValidationReport,
}

/// Returns whether the chain is valid; the report is written either way.
pub fn validate_cmd(args: &ValidateArgs) -> CliResult<bool> {
    let chain = args.chain.build(args.seed, args.anchor.map(StateId))?;
    let report = validate(&chain);
    let valid = report.is_valid();
    if !valid {
        eprintln!("invalid chain: {report}");
    }
    write_json(args.out.as_deref(), &ValidateOutput { chain: chain.describe(), valid, report })?;
    Ok(valid)
}

#[derive(Serialize)]
struct DeltaRow {
    delta: f64,
    pi_hat: f64,
    total_steps: u64,
}

pub fn sweep(args: &SweepDeltaArgs) -> CliResult<()> {
    let params = args.params.params()?;
    set_workers(args.params.workers);
    let anchor = StateId(args.anchor);
    let chain = args.chain.build(params.seed, Some(anchor))?;
    let rows: Vec<DeltaRow> = sweep_delta(&chain, anchor, &params, &args.deltas)?
        .into_iter()
        .map(|r| DeltaRow { delta: r.delta, pi_hat: r.pi_hat, total_steps: r.total_steps })
        .collect();
    write_rows(&args.out, Format::Csv, &rows)
}

#[derive(Serialize)]
struct BetaCsvRow {
    anchor: StateId,
    beta: f64,
    steps_needed: Option<u64>,
    expected_return_time: f64,
}

pub fn beta(args: &BetaSweepArgs) -> CliResult<()> {
    if !args.chain.is_pagerank() {
        return Err(config("beta-sweep needs --chain ppr or --chain pagerank"));
    }
    let adj = args.chain.adjacency(args.seed)?;
    let cfg = OracleConfig::default();
    let anchors: Vec<StateId> = if args.anchors.is_empty() {
        spread_anchors(&adj, args.chain.beta, args.anchor_count, &cfg)?
    } else {
        args.anchors.iter().copied().map(StateId).collect()
    };
    let run = BetaSweepConfig {
        replicas: args.replicas,
        walk_steps: args.walk_steps,
        checkpoint: args.checkpoint,
        error_target: args.error_target,
        seed: args.seed,
    };
    let rows: Vec<BetaCsvRow> = beta_sweep(&adj, &anchors, &args.betas, &run, &cfg)?
        .into_iter()
        .map(|r| BetaCsvRow {
            anchor: r.anchor,
            beta: r.beta,
            steps_needed: r.steps_needed,
            expected_return_time: r.expected_return_time,
        })
        .collect();
    write_rows(&args.out, Format::Csv, &rows)
}

pub fn reproduce(args: &ReproduceArgs) -> CliResult<()> {
    let params = args.params.params()?;
    set_workers(args.params.workers);
    let anchor = args.anchor.map(StateId);
    let chain = args.chain.build(params.seed, anchor)?;
    let table = OracleTable::for_handle(&chain, &OracleConfig::default())?;
    let by_rank = args.chain.is_pagerank();
    let limit = args.limit.or((args.chain.chain == ChainKind::Mm1).then_some(50));
    match args.figure {
        Figure::Anchors => write_rows(&args.out, Format::Csv, &reproduce_anchors(&chain, &table, &params, limit, by_rank)?),
        Figure::Stats => write_rows(&args.out, Format::Csv, &reproduce_stats(&chain, &table, &params, limit, by_rank)?),
        Figure::Observers => {
            let anchor = match anchor {
                Some(a) => a,
                None if by_rank => table.keys[rank_by_pi(&table.pi)[0]],
                None => table.keys[0],
            };
            write_rows(&args.out, Format::Csv, &reproduce_observers(&chain, &table, anchor, &params, by_rank)?)
        }
    }
}
