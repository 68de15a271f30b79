//! `cnldp`: command-line front end for common-neighbor estimation under edge LDP.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or validation error,
//! 4 infeasible pair sampling.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cn_ldp::bench::{self, BenchOutput, RunConfig};
use cn_ldp::graph::{generate_synthetic, load_edge_list, write_edge_list};
use cn_ldp::{Algorithm, BipartiteGraph, EdgeListFormat, Error, Layer, QueryPair, VertexRef};

#[derive(Parser)]
#[command(
    name = "cnldp",
    version,
    about = "Bipartite common-neighbor estimation under edge local differential privacy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the common neighbors of one explicit pair.
    Estimate(EstimateArgs),
    /// Mean absolute error over sampled query pairs.
    Bench(BenchArgs),
    /// Summary metrics over a grid of epsilons and/or single-source splits.
    Sweep(SweepArgs),
    /// Per-trial estimates for one pair, for histogramming.
    Distribution(EstimateArgs),
    /// Write a random bipartite graph as a KONECT edge list.
    GenSynthetic(GenArgs),
    /// Print the size summary of a graph as JSON.
    Summary(GraphArgs),
}

#[derive(Args)]
struct GraphArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value = "konect")]
    format: EdgeListFormat,
}

#[derive(Args)]
struct CommonArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Algorithm tag (naive, oner, ss, ds, central); repeatable, all by default.
    #[arg(long = "algo")]
    algos: Vec<Algorithm>,
    /// Total privacy budget; repeatable.
    #[arg(long = "epsilon")]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Layer the query vertices belong to.
    #[arg(long, default_value = "upper")]
    layer: Layer,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Emit JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// External (1-based) id of the first query vertex.
    #[arg(long)]
    u: u64,
    #[arg(long)]
    w: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// Share of epsilon that `ss` spends on randomized response.
    #[arg(long, default_value_t = 0.5)]
    eps1_fraction: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    /// Keep only pairs with max(d_u, d_w) > kappa * min(d_u, d_w).
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, visible_alias = "trials", default_value_t = 1)]
    trials_per_pair: usize,
    #[arg(long, default_value_t = 0.5)]
    eps1_fraction: f64,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, visible_alias = "trials", default_value_t = 1)]
    trials_per_pair: usize,
    /// Single-source split to sweep; repeatable.
    #[arg(long = "eps1-fraction")]
    eps1_fractions: Vec<f64>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    density: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

const DEFAULT_EPSILON: f64 = 2.0;
const DEFAULT_SWEEP: [f64; 5] = [1.0, 1.5, 2.0, 2.5, 3.0];
const DEFAULT_DISTRIBUTION_TRIALS: usize = 1000;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cnldp: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InfeasibleKappa { .. } => 4,
        _ => 3,
    }
}

fn run(command: Command) -> cn_ldp::Result<()> {
    match command {
        Command::Estimate(args) => {
            let trials = args.trials.unwrap_or(1);
            single_pair(args, trials, bench::run_pair)
        }
        Command::Distribution(args) => {
            let trials = args.trials.unwrap_or(DEFAULT_DISTRIBUTION_TRIALS);
            single_pair(args, trials, bench::run_distribution)
        }
        Command::Bench(args) => {
            let g = load(&args.common.graph)?;
            let config = RunConfig {
                pairs: args.pairs,
                kappa: args.kappa,
                trials_per_pair: args.trials_per_pair,
                eps1_fraction: args.eps1_fraction,
                ..base_config(&args.common, &[DEFAULT_EPSILON])
            };
            let output = bench::run_bench(&g, &config)?;
            emit(&args.common, &output, |out, w| {
                bench::write_rows_csv(&out.rows, &mut *w)?;
                bench::write_summary_block(&out.summaries, w)
            })
        }
        Command::Sweep(args) => {
            let g = load(&args.common.graph)?;
            let config = RunConfig {
                pairs: args.pairs,
                kappa: args.kappa,
                trials_per_pair: args.trials_per_pair,
                ..base_config(&args.common, &DEFAULT_SWEEP)
            };
            let output = bench::run_sweep(&g, &config, &args.eps1_fractions)?;
            emit(&args.common, &output, |out, w| {
                bench::write_summary_csv(&out.summaries, w)
            })
        }
        Command::GenSynthetic(args) => {
            let g = generate_synthetic(args.n1, args.n2, args.density, args.seed)?;
            let mut w = BufWriter::new(File::create(&args.out)?);
            write_edge_list(&g, &mut w)?;
            w.flush()?;
            Ok(())
        }
        Command::Summary(args) => {
            let g = load(&args)?;
            let mut stdout = io::stdout().lock();
            serde_json::to_writer(&mut stdout, &g.summary()).map_err(Error::from)?;
            writeln!(stdout)?;
            Ok(())
        }
    }
}

fn load(args: &GraphArgs) -> cn_ldp::Result<BipartiteGraph> {
    load_edge_list(&args.graph, args.format)
}

fn base_config(common: &CommonArgs, default_epsilons: &[f64]) -> RunConfig {
    RunConfig {
        algorithms: if common.algos.is_empty() {
            Algorithm::ALL.to_vec()
        } else {
            common.algos.clone()
        },
        epsilons: if common.epsilons.is_empty() {
            default_epsilons.to_vec()
        } else {
            common.epsilons.clone()
        },
        seed: common.seed,
        layer: common.layer,
        ..RunConfig::default()
    }
}

fn single_pair(
    args: EstimateArgs,
    trials: usize,
    runner: fn(&BipartiteGraph, &QueryPair, &RunConfig) -> cn_ldp::Result<BenchOutput>,
) -> cn_ldp::Result<()> {
    let g = load(&args.common.graph)?;
    let layer = args.common.layer;
    let q = QueryPair::new(vertex(&g, layer, args.u)?, vertex(&g, layer, args.w)?)?;
    let config = RunConfig {
        trials_per_pair: trials,
        eps1_fraction: args.eps1_fraction,
        ..base_config(&args.common, &[DEFAULT_EPSILON])
    };
    let output = runner(&g, &q, &config)?;
    emit(&args.common, &output, |out, w| {
        bench::write_rows_csv(&out.rows, w)
    })
}

fn vertex(g: &BipartiteGraph, layer: Layer, external_id: u64) -> cn_ldp::Result<VertexRef> {
    let index = external_id
        .checked_sub(1)
        .and_then(|i| u32::try_from(i).ok())
        .ok_or_else(|| Error::Validation(format!("vertex id {external_id} is out of range")))?;
    let v = VertexRef::new(layer, index);
    g.check_vertex(v)?;
    Ok(v)
}

fn emit(
    common: &CommonArgs,
    output: &BenchOutput,
    csv: impl FnOnce(&BenchOutput, &mut dyn Write) -> cn_ldp::Result<()>,
) -> cn_ldp::Result<()> {
    let mut sink: Box<dyn Write> = match &common.out {
        Some(path) => Box::new(BufWriter::new(create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    if common.json {
        bench::write_json(output, &mut sink)?;
    } else {
        csv(output, &mut sink)?;
    }
    sink.flush()?;
    Ok(())
}

fn create(path: &Path) -> cn_ldp::Result<File> {
    Ok(File::create(path)?)
}
