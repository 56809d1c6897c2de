use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sandgraph::events::Attribution;
use sandgraph::fixtures::{ActivityStreamSpec, PlantedBowTieSpec, Shock};
use sandgraph::graph::GraphLimits;
use sandgraph::ingest::{Format, TxKind};
use sandgraph::Address;
use sandgraph_cli::{
    cmd_all, cmd_bowtie, cmd_events, cmd_generate, cmd_ingest, cmd_sankey, cmd_whales,
    parse_amount, CliError, EventPartition, GenerateTarget, RunConfig,
};

/// Bow-tie, snapshot-flow, whale and event-window analytics over
/// blockchain transaction exports.
#[derive(Parser)]
#[command(name = "sandgraph", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse exports, write the graph cache and an ingest report.
    Ingest(RunArgs),
    /// Bow-tie partition CSV and summary.
    Bowtie(RunArgs),
    /// Category flows between event-anchored cumulative snapshots.
    Sankey(RunArgs),
    /// Whale ledger, bow-tie cross-tabs and degree comparison.
    Whales(RunArgs),
    /// Daily series in a window around each event, with chart specs.
    Events(RunArgs),
    /// Every stage in sequence over one load.
    All(RunArgs),
    /// Write a synthetic dataset and its ground truth.
    Generate(GenerateArgs),
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse()
        .map_err(|e: sandgraph::ingest::IngestError| e.to_string())
}

#[derive(Args)]
struct RunArgs {
    /// Export files (CSV or JSON Lines). Without them the graph cache is read.
    #[arg(short, long = "input", value_name = "PATH")]
    inputs: Vec<PathBuf>,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Graph cache path [default: <out>/graph.sgc].
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Events CSV (name,date,category); the built-in list when omitted.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Whale threshold in token base units, e.g. 1e22.
    #[arg(long, value_parser = parse_amount, default_value = "1e22")]
    threshold: sandgraph::U256,
    /// Token contract for whale replay; the most-transferred token otherwise.
    #[arg(long)]
    token_contract: Option<Address>,
    /// Days after each event date at which its snapshot is cut.
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(i64).range(0..))]
    offset_days: i64,
    /// Endpoint whose bow-tie label an event transaction counts under
    /// (sender, receiver, either).
    #[arg(long, default_value = "sender")]
    attribution: Attribution,
    /// Partition used for event group splits: the full graph, or each
    /// event's cumulative snapshot (full, snapshot).
    #[arg(long, default_value = "full")]
    event_partition: EventPartition,
    /// Largest graph the brute-force oracle will check.
    #[arg(long, default_value_t = sandgraph::bowtie::DEFAULT_ORACLE_BOUND)]
    oracle_bound: usize,
    /// Cross-check classification against the brute-force oracle.
    #[arg(long)]
    verify: bool,
    /// Fail on malformed rows instead of skipping them.
    #[arg(long)]
    strict: bool,
    /// Kind assumed for rows without one (normal, token, nft, multitoken, internal).
    #[arg(long)]
    default_kind: Option<TxKind>,
    #[arg(long)]
    max_nodes: Option<usize>,
    #[arg(long)]
    max_edges: Option<usize>,
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        let defaults = GraphLimits::default();
        RunConfig {
            inputs: self.inputs,
            format: self.format,
            out_dir: self.out,
            cache: self.cache,
            events_file: self.events,
            threshold: self.threshold,
            token_contract: self.token_contract,
            offset_days: self.offset_days,
            attribution: self.attribution,
            event_partition: self.event_partition,
            oracle_bound: self.oracle_bound,
            verify: self.verify,
            strict: self.strict,
            default_kind: self.default_kind,
            limits: GraphLimits {
                max_nodes: self.max_nodes.unwrap_or(defaults.max_nodes),
                max_edges: self.max_edges.unwrap_or(defaults.max_edges),
            },
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Fixture {
    /// Small hub-centred activity stream.
    Activity,
    /// Activity stream at the scale of the full study dataset.
    SandboxScale,
    /// Graph with planted bow-tie categories.
    Bowtie,
}

fn parse_shock(s: &str) -> Result<Shock, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [day, mult, dur] = parts.as_slice() else {
        return Err("expected DAY:MULTIPLIER:DURATION".into());
    };
    Ok(Shock {
        day: day.parse().map_err(|e| format!("day: {e}"))?,
        multiplier: mult.parse().map_err(|e| format!("multiplier: {e}"))?,
        duration: dur.parse().map_err(|e| format!("duration: {e}"))?,
    })
}

fn parse_sizes(s: &str) -> Result<[usize; 7], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|e| format!("{x:?}: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|_| "expected seven sizes: scc,in,out,tubes,tendrils_in,tendrils_out,other".into())
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    fixture: Fixture,
    /// Data file; the truth file is written next to it.
    #[arg(short, long)]
    out: PathBuf,
    /// Output format; inferred from the file extension when omitted.
    #[arg(long, value_parser = parse_format)]
    format: Option<Format>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Address pool size (activity fixtures).
    #[arg(long)]
    addresses: Option<usize>,
    /// Days covered (activity fixtures).
    #[arg(long)]
    days: Option<u32>,
    /// Mean transactions per day before shocks (activity fixtures).
    #[arg(long)]
    base_rate: Option<f64>,
    /// Planted whale count (activity fixtures).
    #[arg(long)]
    whales: Option<usize>,
    /// Planted burst, DAY:MULTIPLIER:DURATION; repeatable.
    #[arg(long, value_parser = parse_shock)]
    shock: Vec<Shock>,
    /// Unix seconds of the first day.
    #[arg(long)]
    start: Option<i64>,
    /// Bow-tie sizes scc,in,out,tubes,tendrils_in,tendrils_out,other.
    #[arg(long, value_parser = parse_sizes, default_value = "3,1,1,1,1,1,2")]
    sizes: [usize; 7],
    /// Probability of each optional label-preserving extra edge.
    #[arg(long, default_value_t = 0.2)]
    extra_edge_rate: f64,
}

impl GenerateArgs {
    fn target(&self) -> GenerateTarget {
        let base = match self.fixture {
            Fixture::Bowtie => {
                return GenerateTarget::BowTie(PlantedBowTieSpec::from_sizes(
                    self.sizes,
                    self.seed,
                    self.extra_edge_rate,
                ))
            }
            Fixture::Activity => ActivityStreamSpec {
                seed: self.seed,
                ..ActivityStreamSpec::default()
            },
            Fixture::SandboxScale => ActivityStreamSpec::sandbox_scale(self.seed),
        };
        GenerateTarget::Activity(ActivityStreamSpec {
            n_addresses: self.addresses.unwrap_or(base.n_addresses),
            n_days: self.days.unwrap_or(base.n_days),
            base_rate: self.base_rate.unwrap_or(base.base_rate),
            whale_count: self.whales.unwrap_or(base.whale_count),
            shocks: self.shock.clone(),
            start: self.start.unwrap_or(base.start),
            ..base
        })
    }
}

fn run(command: Command) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Ingest(a) => cmd_ingest(&a.into_config()),
        Command::Bowtie(a) => cmd_bowtie(&a.into_config()),
        Command::Sankey(a) => cmd_sankey(&a.into_config()),
        Command::Whales(a) => cmd_whales(&a.into_config()),
        Command::Events(a) => cmd_events(&a.into_config()),
        Command::All(a) => cmd_all(&a.into_config()),
        Command::Generate(g) => cmd_generate(&g.target(), &g.out, g.format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
