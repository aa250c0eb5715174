use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use locostat::chain::{
    build_clique, build_clique_cycle, build_magnet, build_mm1, build_pagerank, build_personalized_pagerank,
    gen_config_model, parse_adjacency, parse_chain_file, Adjacency, ChainHandle, StateId,
};
use locostat::estimator::EstimatorParams;
use locostat::sampler::{ObserverSet, Parallelism};

use crate::error::{config, CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "locostat", version, about = "Local Monte Carlo estimates of Markov chain stationary probabilities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the stationary probability of an anchor state.
    Estimate(EstimateArgs),
    /// Estimate through the round-based message-passing simulation.
    Distsim(DistsimArgs),
    /// Dump exact stationary quantities of a finite chain.
    Oracle(OracleArgs),
    /// Evaluate the analytic error and cost bounds for an anchor.
    Bounds(BoundsArgs),
    /// Check that a chain is stochastic and strongly connected.
    Validate(ValidateArgs),
    /// Run the estimator once per threshold.
    SweepDelta(SweepDeltaArgs),
    /// Steps for long-walk estimates on personalized PageRank chains.
    BetaSweep(BetaSweepArgs),
    /// Estimates for the anchor, observer and cost figures.
    Reproduce(ReproduceArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChainKind {
    Pagerank,
    Ppr,
    Mm1,
    Magnet,
    Clique,
    CliqueCycle,
    File,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct ChainArgs {
    #[arg(long, value_enum)]
    pub chain: ChainKind,
    /// Chain file for `--chain file`.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Adjacency file for the PageRank chains; generated when absent.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long, default_value_t = 0.15)]
    pub beta: f64,
    /// Reset node of `--chain ppr`; defaults to the anchor.
    #[arg(long)]
    pub reset: Option<u64>,
    #[arg(long, default_value_t = 0.3)]
    pub q1: f64,
    #[arg(long, default_value_t = 0.3)]
    pub q2: f64,
    #[arg(long, default_value_t = 25)]
    pub n1: usize,
    #[arg(long, default_value_t = 50)]
    pub n2: usize,
    /// Node count (graph size, clique size or clique-cycle length).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long = "eps-cc", default_value_t = 0.1)]
    pub eps_cc: f64,
    #[arg(long, default_value_t = 2.5)]
    pub exponent: f64,
    #[arg(long = "min-degree", default_value_t = 2)]
    pub min_degree: usize,
    /// Seed of the generated graph; defaults to `--seed`.
    #[arg(long = "graph-seed")]
    pub graph_seed: Option<u64>,
}

impl ChainArgs {
    pub fn is_pagerank(&self) -> bool {
        matches!(self.chain, ChainKind::Pagerank | ChainKind::Ppr)
    }

    pub fn adjacency(&self, seed: u64) -> CliResult<Adjacency> {
        match &self.graph {
            Some(path) => Ok(parse_adjacency(&read(path)?)?),
            None => Ok(gen_config_model(
                self.n.unwrap_or(100),
                self.exponent,
                self.min_degree,
                self.graph_seed.unwrap_or(seed),
            )?),
        }
    }

    pub fn build(&self, seed: u64, anchor: Option<StateId>) -> CliResult<ChainHandle> {
        let chain = match self.chain {
            ChainKind::Pagerank => build_pagerank(&self.adjacency(seed)?, self.beta)?,
            ChainKind::Ppr => {
                let reset = self
                    .reset
                    .map(StateId)
                    .or(anchor)
                    .ok_or_else(|| config("--chain ppr needs --reset or --anchor"))?;
                build_personalized_pagerank(&self.adjacency(seed)?, self.beta, reset)?
            }
            ChainKind::Mm1 => build_mm1(self.q1)?,
            ChainKind::Magnet => build_magnet(self.q1, self.q2, self.n1, self.n2)?,
            ChainKind::Clique => build_clique(self.n.unwrap_or(20))?,
            ChainKind::CliqueCycle => build_clique_cycle(self.n.unwrap_or(20), self.k, self.eps_cc)?,
            ChainKind::File => {
                let path = self.file.as_ref().ok_or_else(|| config("--chain file needs --file"))?;
                parse_chain_file(&read(path)?)?.into()
            }
        };
        Ok(chain)
    }
}

pub fn read(path: &PathBuf) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

#[derive(Args, Debug, Clone)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.02)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.15)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Sampling threads; 1 samples sequentially. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Overrides the derived iteration cap.
    #[arg(long = "max-iterations")]
    pub max_iterations: Option<u32>,
}

impl ParamArgs {
    pub fn params(&self) -> CliResult<EstimatorParams> {
        let mut p = EstimatorParams::new(self.delta, self.eps, self.alpha, self.seed)?;
        p.hard_iteration_cap = self.max_iterations;
        if self.workers == 0 {
            return Err(config("--workers must be at least 1"));
        }
        let parallelism = if self.workers > 1 { Parallelism::Rayon } else { Parallelism::Sequential };
        Ok(p.with_parallelism(parallelism))
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub anchor: u64,
    /// Comma-separated states, `all` or `none`.
    #[arg(long, default_value = "none")]
    pub observers: String,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub out: OutArgs,
    /// Also write the per-iteration trace as CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistsimArgs {
    #[command(flatten)]
    pub estimate: EstimateArgs,
    /// Write per-round message counts as CSV here.
    #[arg(long = "rounds-log")]
    pub rounds_log: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Anchor, needed only for `--chain ppr` without `--reset`.
    #[arg(long)]
    pub anchor: Option<u64>,
    /// Include the full fundamental matrix in JSON output.
    #[arg(long = "full-z")]
    pub full_z: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub anchor: u64,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Lyapunov level `b` of `V(x) = x` for countable chains.
    #[arg(long = "lyap-b", default_value_t = 0.0)]
    pub lyap_b: f64,
    /// Drift constant; defaults to `1 - 2 q1` for MM1.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub anchor: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepDeltaArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long)]
    pub anchor: u64,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub deltas: Vec<f64>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct BetaSweepArgs {
    #[command(flatten)]
    pub chain: ChainArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.02,0.05,0.1,0.2,0.5")]
    pub betas: Vec<f64>,
    /// Comma-separated anchors; spread over the PageRank order when absent.
    #[arg(long, value_delimiter = ',')]
    pub anchors: Vec<u64>,
    #[arg(long = "anchor-count", default_value_t = 4)]
    pub anchor_count: usize,
    #[arg(long, default_value_t = 10)]
    pub replicas: u32,
    #[arg(long = "walk-steps", default_value_t = 100_000)]
    pub walk_steps: u64,
    #[arg(long, default_value_t = 1_000)]
    pub checkpoint: u64,
    #[arg(long = "error-target", default_value_t = 0.05)]
    pub error_target: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    Anchors,
    Observers,
    Stats,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(long, value_enum)]
    pub figure: Figure,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Observer-mode anchor; defaults to the first state (highest PageRank).
    #[arg(long)]
    pub anchor: Option<u64>,
    /// Number of anchors; defaults to 50 for MM1 and every state otherwise.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn parse_observers(text: &str) -> CliResult<ObserverSet> {
    match text.trim() {
        "all" => Ok(ObserverSet::All),
        "none" | "" => Ok(ObserverSet::None),
        list => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<u64>()
                    .map(StateId)
                    .map_err(|_| config(format!("bad observer {s:?}")))
            })
            .collect::<CliResult<Vec<_>>>()
            .map(ObserverSet::Listed),
    }
}
