use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use onp_core::evaluator::EvalPath;
use onp_core::problem::ModelParams;
use onp_core::solver::HessianMode;

#[derive(Debug, Parser)]
#[command(name = "onp", version, about = "Route pricing for oblivious network users")]
pub struct Cli {
    /// Worker threads for the evaluator; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an instance manifest and its route table.
    Generate(GenerateArgs),
    /// Solve an instance and write the result and the iteration trace.
    Solve(SolveArgs),
    /// Finite-difference and dense-reference checks at one price vector.
    Verify(VerifyArgs),
    /// Time both evaluation paths on generated instances.
    Benchmark(BenchmarkArgs),
    /// Run a command again from its run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub kind: GenerateKind,

    /// Output directory.
    #[arg(long, short, default_value = ".", global = true)]
    pub out: PathBuf,
}

/// Parameter presets for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    /// Wide price box and unit flow cap: many samples sit at a projection
    /// bound, so the active sets are small.
    Sparse,
    /// Narrow price box and a loose flow cap: flows stay inside their bounds.
    Interior,
}

impl Regime {
    pub fn params(self) -> ModelParams {
        match self {
            Self::Sparse => ModelParams::default(),
            Self::Interior => ModelParams::interior(),
        }
    }

    pub fn demand_fraction(self) -> f64 {
        match self {
            Self::Sparse => 0.1,
            Self::Interior => 0.6,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum GenerateKind {
    /// The four-node fixture with sixteen routes.
    Toy4,
    /// A random strongly connected network with enumerated routes.
    Random {
        #[arg(long)]
        routes: usize,
        /// Defaults to a fifth of the route count.
        #[arg(long)]
        edges: Option<usize>,
        #[arg(long, default_value_t = 2)]
        commodities: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Regime::Sparse)]
        regime: Regime,
    },
    /// Routes on a network read from a TNTP file.
    Tntp {
        #[arg(long)]
        net: PathBuf,
        /// Use the first N ordered node pairs; all pairs when omitted.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long, default_value_t = 9)]
        max_per_pair: usize,
        #[arg(long, default_value_t = 6)]
        max_length: usize,
        /// Commodity as `origin,destination` in file node ids; repeatable.
        #[arg(long = "commodity", value_parser = parse_pair, required = true)]
        commodities: Vec<(u64, u64)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Regime::Interior)]
        regime: Regime,
    },
}

fn parse_pair(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected origin,destination, got '{s}'"))?;
    let parse = |v: &str| v.trim().parse::<u64>().map_err(|e| format!("'{v}': {e}"));
    Ok((parse(a)?, parse(b)?))
}

/// Instance, sampling and evaluation path shared by `solve` and `verify`.
#[derive(Debug, Args)]
pub struct ProblemArgs {
    /// Instance manifest written by `generate`.
    #[arg(long)]
    pub instance: PathBuf,

    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    /// Base seed; scenario draws use a fixed offset from it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output directory.
    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    #[arg(long, value_parser = parse_path, default_value = "sparse")]
    pub path: EvalPath,

    /// Solver settings as JSON; flags below override single fields.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    pub tol: Option<f64>,

    #[arg(long)]
    pub max_iter: Option<usize>,

    #[arg(long, value_parser = parse_hessian_mode)]
    pub hessian_mode: Option<HessianMode>,

    /// Starting prices as a JSON array; the box midpoint when omitted.
    #[arg(long)]
    pub p0: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,

    /// `random`, `midpoint`, or a JSON file holding a price array or a
    /// solve result.
    #[arg(long, default_value = "random")]
    pub point: String,

    #[arg(long, default_value_t = 1e-6)]
    pub gradient_step: f64,

    #[arg(long, default_value_t = 1e-5)]
    pub hessian_step: f64,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Route counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [50usize, 75, 100, 125, 150, 175, 200, 225])]
    pub routes: Vec<usize>,

    #[arg(long, default_value_t = 10)]
    pub repeats: usize,

    #[arg(long, default_value_t = 100)]
    pub samples: usize,

    /// Repeat k of every size uses seed + k.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Routes per edge.
    #[arg(long, default_value_t = 5)]
    pub route_edge_ratio: usize,

    #[arg(long, default_value_t = 2)]
    pub commodities: usize,

    #[arg(long, value_enum, default_value_t = Regime::Interior)]
    pub regime: Regime,

    /// Fixed iteration budget per solve instead of running to convergence.
    #[arg(long)]
    pub max_iter: Option<usize>,

    #[arg(long, short, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,

    /// Output directory for the replayed run; the original one when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_path(s: &str) -> Result<EvalPath, String> {
    s.parse()
}

fn parse_hessian_mode(s: &str) -> Result<HessianMode, String> {
    s.parse()
}
