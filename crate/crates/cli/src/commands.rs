use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;

use sandgraph::bowtie::{classify_bruteforce, BowTieError, LabelCounts};
use sandgraph::events::{
    daily_series, group_split_all, group_split_series, whale_series_all, EventSpec,
    EventWindowSeries, GroupCounts, PartitionLookup, WINDOW_HALF_WIDTH,
};
use sandgraph::graph::AverageDegree;
use sandgraph::ingest::{IngestReport, NormalizedEdge, TxKind};
use sandgraph::report::{
    category_shares, chart_spec, write_flow_csv, write_long_series_csv, write_partition_csv,
    write_series_csv, write_whale_csv, BowTieSummary, CategoryShare, TimelineReport,
    SCHEMA_VERSION,
};
use sandgraph::temporal::{
    address_universe, check_scc_monotone, consecutive_flows, membership_timeline, midnight_utc,
    snapshot_graph, SccViolation, SnapshotSpec, SECONDS_PER_DAY,
};
use sandgraph::whales::{
    current_whales, degree_comparison, historical_whales, replay_balances, whale_bowtie_crosstab,
    WhaleConfig,
};
use sandgraph::{cache, classify, Address, BowTiePartition};
use serde::Serialize;

use crate::output::{write_metadata, OutDir};
use crate::{
    config_hash, load, load_event_list, relative_to, CliError, Context, EventPartition, Loaded,
    RunConfig,
};

const MAX_LISTED_ROW_ERRORS: usize = 1_000;
const MAX_LISTED_VIOLATIONS: usize = 1_000;

struct Run<'a> {
    cfg: &'a RunConfig,
    data: Loaded,
    out: OutDir,
    config_hash: String,
    partition: Option<Option<BowTiePartition>>,
    verified: bool,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a RunConfig) -> Result<Self, CliError> {
        let data = load(cfg)?;
        let (_, events_digest) = load_event_list(cfg)?;
        let out = OutDir::create(&cfg.out_dir)?;
        Ok(Run {
            cfg,
            data,
            out,
            config_hash: config_hash(cfg, &events_digest),
            partition: None,
            verified: false,
        })
    }

    fn finish(&mut self, command: &str) -> Result<Vec<PathBuf>, CliError> {
        write_metadata(
            &mut self.out,
            self.cfg,
            command,
            &self.config_hash,
            &self.data.input_digest,
        )
    }

    /// The full-graph partition, computed once. `None` for an empty graph.
    fn partition(&mut self) -> Result<Option<&BowTiePartition>, CliError> {
        if self.partition.is_none() {
            let g = &self.data.graph;
            let p = if g.is_empty() {
                None
            } else {
                let p = classify(g).data("classify")?;
                if self.cfg.verify {
                    let brute =
                        classify_bruteforce(g, self.cfg.oracle_bound).map_err(|e| match e {
                            BowTieError::OracleTooLarge { .. } => CliError::Capacity(e.to_string()),
                            other => CliError::Data(other.to_string()),
                        })?;
                    if brute != p {
                        return Err(CliError::Capacity(
                            "brute-force oracle disagrees with the fast classification".into(),
                        ));
                    }
                    self.verified = true;
                }
                Some(p)
            };
            self.partition = Some(p);
        }
        Ok(self.partition.as_ref().unwrap().as_ref())
    }
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    schema_version: u32,
    #[serde(flatten)]
    report: &'a IngestReport,
    nodes: usize,
    distinct_pairs: usize,
    row_errors_listed: Vec<String>,
}

fn step_ingest(run: &mut Run) -> Result<(), CliError> {
    let path = run.cfg.cache_path();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).data(&parent.display().to_string())?;
    }
    cache::save_file(&path, &run.data.edges, &run.data.report).data("cache")?;
    if let Some(rel) = relative_to(run.out.root(), &path) {
        run.out.record(&rel);
    }
    let summary = IngestSummary {
        schema_version: SCHEMA_VERSION,
        report: &run.data.report,
        nodes: run.data.graph.node_count(),
        distinct_pairs: run.data.graph.pair_count(),
        row_errors_listed: run
            .data
            .row_errors
            .iter()
            .take(MAX_LISTED_ROW_ERRORS)
            .map(|e| e.to_string())
            .collect(),
    };
    run.out.json("ingest_report.json", &summary)
}

fn step_bowtie(run: &mut Run) -> Result<(), CliError> {
    let partition = run.partition()?.cloned();
    let empty = BowTiePartition {
        labels: Vec::new(),
        core_id: 0,
        sizes: LabelCounts::default(),
    };
    let w = run.out.file("partition.csv")?;
    write_partition_csv(&run.data.graph, partition.as_ref().unwrap_or(&empty), w)
        .data("partition.csv")?;
    let summary = BowTieSummary::new(&run.data.graph, partition.as_ref(), run.verified);
    run.out.json("bowtie_summary.json", &summary)
}

#[derive(Serialize)]
struct CutEvents {
    cut: i64,
    events: Vec<String>,
}

#[derive(Serialize)]
struct SankeyReport {
    #[serde(flatten)]
    timeline: TimelineReport,
    offset_days: i64,
    cut_events: Vec<CutEvents>,
    flow_files: Vec<String>,
    scc_monotonicity_violations_listed: Vec<SccViolation>,
}

fn step_sankey(run: &mut Run) -> Result<(), CliError> {
    let (events, _) = load_event_list(run.cfg)?;
    let offset = run.cfg.offset_days;
    let spec = SnapshotSpec::from_event_dates(events.iter().map(|e| e.date), offset)
        .data("snapshot cuts")?;
    let edges = &run.data.edges;
    let timeline = membership_timeline(edges, &spec).data("snapshots")?;
    let universe = address_universe(edges);
    let flows = consecutive_flows(&timeline, &universe).data("flows")?;
    for (k, f) in flows.iter().enumerate() {
        if !f.is_conserved(&timeline[k], &timeline[k + 1], universe.len()) {
            return Err(CliError::Data(format!("flow {k} is not conserved")));
        }
    }
    let violations = check_scc_monotone(&timeline);

    let w = run.out.file("sankey/flows.csv")?;
    write_flow_csv(&flows, w).data("flows.csv")?;
    let mut flow_files = Vec::new();
    for (k, f) in flows.iter().enumerate() {
        let name = format!("sankey/flow_{:02}_{:02}.csv", k, k + 1);
        let w = run.out.file(&name)?;
        write_flow_csv([f], w).data(&name)?;
        flow_files.push(name);
    }
    let cut_events = spec
        .cuts()
        .iter()
        .map(|&cut| CutEvents {
            cut,
            events: events
                .iter()
                .filter(|e| midnight_utc(e.date) + offset * SECONDS_PER_DAY == cut)
                .map(|e| e.name.clone())
                .collect(),
        })
        .collect();
    let report = SankeyReport {
        timeline: TimelineReport::new(&timeline, universe.len(), violations.len()),
        offset_days: offset,
        cut_events,
        flow_files,
        scc_monotonicity_violations_listed: violations
            .into_iter()
            .take(MAX_LISTED_VIOLATIONS)
            .collect(),
    };
    run.out.json("sankey/timeline.json", &report)
}

/// The configured token contract, or the one with the most token transfers
/// (ties go to the smaller address).
fn resolve_token(cfg: &RunConfig, edges: &[NormalizedEdge]) -> Option<(Address, &'static str)> {
    if let Some(t) = cfg.token_contract {
        return Some((t, "flag"));
    }
    let mut counts: BTreeMap<Address, usize> = BTreeMap::new();
    for e in edges.iter().filter(|e| e.kind == TxKind::Token) {
        if let Some(t) = e.token_contract {
            *counts.entry(t).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(addr, n)| (n, Reverse(addr)))
        .map(|(addr, _)| (addr, "inferred"))
}

#[derive(Serialize)]
struct WhaleGroup {
    count: usize,
    by_label: Vec<CategoryShare>,
    absent_from_graph: usize,
}

#[derive(Serialize)]
struct DegreeRow {
    degree_sum: u64,
    population: u64,
    value: f64,
}

impl From<AverageDegree> for DegreeRow {
    fn from(a: AverageDegree) -> Self {
        DegreeRow {
            degree_sum: a.degree_sum,
            population: a.population,
            value: a.value(),
        }
    }
}

#[derive(Serialize)]
struct DegreeReport {
    network: Option<DegreeRow>,
    network_excluding_whales: Option<DegreeRow>,
    current_whales: Option<DegreeRow>,
    historical_whales: Option<DegreeRow>,
}

#[derive(Serialize)]
struct WhaleSummary {
    schema_version: u32,
    token_contract: Address,
    token_contract_source: &'static str,
    threshold: String,
    ledger_accounts: usize,
    current_whales: WhaleGroup,
    historical_whales: WhaleGroup,
    average_degree: DegreeReport,
}

struct WhaleSets {
    token: Address,
    current: BTreeSet<Address>,
}

fn step_whales(run: &mut Run) -> Result<WhaleSets, CliError> {
    let (token, source) = resolve_token(run.cfg, &run.data.edges).ok_or_else(|| {
        CliError::Data(
            "no token transfers to infer a token contract from; pass --token-contract".into(),
        )
    })?;
    let wcfg =
        WhaleConfig::new(token, run.cfg.threshold).map_err(|e| CliError::Usage(e.to_string()))?;
    let ledger = replay_balances(&run.data.edges, &wcfg);
    let current = current_whales(&ledger, &wcfg);
    let historical = historical_whales(&ledger, &wcfg);
    let partition = run.partition()?.cloned();
    let graph = &run.data.graph;
    let group = |set: &BTreeSet<Address>| {
        let tab = match &partition {
            Some(p) => whale_bowtie_crosstab(set, p, graph),
            None => sandgraph::whales::WhaleCrosstab {
                counts: LabelCounts::default(),
                absent_from_graph: set.len(),
            },
        };
        WhaleGroup {
            count: set.len(),
            by_label: category_shares(&tab.counts),
            absent_from_graph: tab.absent_from_graph,
        }
    };
    let deg = degree_comparison(graph, &current, &historical);
    let summary = WhaleSummary {
        schema_version: SCHEMA_VERSION,
        token_contract: token,
        token_contract_source: source,
        threshold: run.cfg.threshold.to_string(),
        ledger_accounts: ledger.len(),
        current_whales: group(&current),
        historical_whales: group(&historical),
        average_degree: DegreeReport {
            network: deg.network.map(Into::into),
            network_excluding_whales: deg.network_excluding_whales.map(Into::into),
            current_whales: deg.current_whales.map(Into::into),
            historical_whales: deg.historical_whales.map(Into::into),
        },
    };
    let w = run.out.file("whales.csv")?;
    write_whale_csv(&ledger, run.cfg.threshold, graph, partition.as_ref(), w).data("whales.csv")?;
    run.out.json("whales_summary.json", &summary)?;
    Ok(WhaleSets { token, current })
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

#[derive(Serialize)]
struct EventEntry {
    index: usize,
    name: String,
    date: String,
    category: String,
    overlaps_data: bool,
    file: String,
    total_tx: u64,
    peak_offset: i64,
    whale_file: Option<String>,
    whale_total_tx: Option<u64>,
    whale_peak_offset: Option<i64>,
}

#[derive(Serialize)]
struct EventsIndex {
    schema_version: u32,
    window_half_width_days: i64,
    attribution: String,
    group_split: bool,
    event_partition: String,
    whale_token_contract: Option<Address>,
    whale_count: Option<usize>,
    long_file: &'static str,
    charts: Vec<&'static str>,
    events: Vec<EventEntry>,
}

const LONG_FILE: &str = "events_long.csv";

/// A series with zero group counts, for an event whose snapshot is empty.
fn ungrouped_series(edges: &[NormalizedEdge], ev: &EventSpec) -> EventWindowSeries {
    let mut s = daily_series(edges, ev, None);
    for b in &mut s.buckets {
        b.groups = Some(GroupCounts::default());
    }
    s
}

fn step_events(run: &mut Run, whales: Option<WhaleSets>) -> Result<(), CliError> {
    let (events, _) = load_event_list(run.cfg)?;
    let mode = run.cfg.attribution;
    let series: Vec<EventWindowSeries> = match run.cfg.event_partition {
        EventPartition::Full => {
            let partition = run.partition()?.cloned();
            match &partition {
                Some(p) => group_split_all(
                    &run.data.edges,
                    &events,
                    PartitionLookup {
                        partition: p,
                        graph: &run.data.graph,
                    },
                    mode,
                ),
                None => events
                    .iter()
                    .map(|e| daily_series(&run.data.edges, e, None))
                    .collect(),
            }
        }
        EventPartition::Snapshot => {
            let offset = run.cfg.offset_days * SECONDS_PER_DAY;
            let mut out = Vec::with_capacity(events.len());
            for ev in &events {
                let g = snapshot_graph(&run.data.edges, midnight_utc(ev.date) + offset);
                out.push(if g.is_empty() {
                    ungrouped_series(&run.data.edges, ev)
                } else {
                    let p = classify(&g).data("classify snapshot")?;
                    let lookup = PartitionLookup {
                        partition: &p,
                        graph: &g,
                    };
                    group_split_series(&run.data.edges, ev, lookup, mode)
                });
            }
            out
        }
    };
    let grouped = series
        .iter()
        .all(|s| s.buckets.iter().all(|b| b.groups.is_some()));
    let edges = &run.data.edges;
    let whale_set: Option<HashSet<Address>> =
        whales.as_ref().map(|w| w.current.iter().copied().collect());
    let whale_series: Option<Vec<EventWindowSeries>> = whale_set
        .as_ref()
        .map(|set| whale_series_all(edges, &events, set));

    let range = edges
        .first()
        .map(|f| (f.timestamp, edges.last().unwrap().timestamp));
    let overlaps = |e: &EventSpec| range.is_some_and(|(a, b)| e.overlaps(a, b));

    let mut entries = Vec::new();
    for (i, (ev, s)) in events.iter().zip(&series).enumerate() {
        let base = format!("events/{:02}_{}", i, slug(&ev.name));
        let file = format!("{base}.csv");
        write_series_csv(s, run.out.file(&file)?).data(&file)?;
        let ws = whale_series.as_ref().map(|all| &all[i]);
        let whale_file = match ws {
            Some(ws) => {
                let f = format!("{base}_whales.csv");
                write_series_csv(ws, run.out.file(&f)?).data(&f)?;
                Some(f)
            }
            None => None,
        };
        entries.push(EventEntry {
            index: i,
            name: ev.name.clone(),
            date: ev.date.format("%Y-%m-%d").to_string(),
            category: ev.category.to_string(),
            overlaps_data: overlaps(ev),
            file,
            total_tx: s.total_tx(),
            peak_offset: s.peak_offset(),
            whale_file,
            whale_total_tx: ws.map(|w| w.total_tx()),
            whale_peak_offset: ws.map(|w| w.peak_offset()),
        });
    }

    let mut rows: Vec<(&str, &EventWindowSeries)> = series.iter().map(|s| ("all", s)).collect();
    if let Some(ws) = &whale_series {
        rows.extend(ws.iter().map(|s| ("whales", s)));
    }
    write_long_series_csv(rows, run.out.file(LONG_FILE)?).data(LONG_FILE)?;

    let mut charts = vec!["chart_tx_count.vl.json", "chart_value.vl.json"];
    let all = "datum.series == 'all'";
    let whale = "datum.series == 'whales'";
    let specs = [
        (
            "chart_tx_count.vl.json",
            "Daily transactions around events",
            all,
            "tx_count",
            false,
        ),
        (
            "chart_value.vl.json",
            "Daily transferred value around events",
            all,
            "value_total",
            false,
        ),
        (
            "chart_groups.vl.json",
            "Daily transactions by bow-tie group",
            all,
            "count",
            true,
        ),
        (
            "chart_whale_tx_count.vl.json",
            "Daily transactions involving current whales",
            whale,
            "tx_count",
            false,
        ),
        (
            "chart_whale_value.vl.json",
            "Daily value of transactions involving current whales",
            whale,
            "value_total",
            false,
        ),
    ];
    if grouped {
        charts.push("chart_groups.vl.json");
    }
    if whale_series.is_some() {
        charts.push("chart_whale_tx_count.vl.json");
        charts.push("chart_whale_value.vl.json");
    }
    for (name, title, filter, y, stacked) in specs {
        if charts.contains(&name) {
            run.out
                .json(name, &chart_spec(title, LONG_FILE, filter, y, stacked))?;
        }
    }

    let index = EventsIndex {
        schema_version: SCHEMA_VERSION,
        window_half_width_days: WINDOW_HALF_WIDTH,
        attribution: mode.to_string(),
        group_split: grouped,
        event_partition: run.cfg.event_partition.to_string(),
        whale_token_contract: whales.as_ref().map(|w| w.token),
        whale_count: whales.as_ref().map(|w| w.current.len()),
        long_file: LONG_FILE,
        charts,
        events: entries,
    };
    run.out.json("events_index.json", &index)
}

/// Parse, normalize, dedupe and build; persist the graph cache and the
/// ingest report.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    if cfg.inputs.is_empty() {
        return Err(CliError::Usage("ingest needs at least one --input".into()));
    }
    let mut run = Run::start(cfg)?;
    step_ingest(&mut run)?;
    run.finish("ingest")
}

/// Partition CSV and bow-tie summary JSON.
pub fn cmd_bowtie(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(cfg)?;
    step_bowtie(&mut run)?;
    run.finish("bowtie")
}

/// Flow CSVs between consecutive event-anchored snapshots and a timeline.
pub fn cmd_sankey(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(cfg)?;
    step_sankey(&mut run)?;
    run.finish("sankey")
}

/// Whale ledger CSV and summary with cross-tabs and degree comparison.
pub fn cmd_whales(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(cfg)?;
    step_whales(&mut run)?;
    run.finish("whales")
}

/// Per-event and long-format series CSVs plus chart specifications. Whale
/// series are included whenever a token contract is known or inferable.
pub fn cmd_events(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(cfg)?;
    let whales = whales_quietly(&mut run)?;
    step_events(&mut run, whales)?;
    run.finish("events")
}

/// Current whales without writing whale artifacts.
fn whales_quietly(run: &mut Run) -> Result<Option<WhaleSets>, CliError> {
    let Some((token, _)) = resolve_token(run.cfg, &run.data.edges) else {
        return Ok(None);
    };
    let wcfg =
        WhaleConfig::new(token, run.cfg.threshold).map_err(|e| CliError::Usage(e.to_string()))?;
    let ledger = replay_balances(&run.data.edges, &wcfg);
    Ok(Some(WhaleSets {
        token,
        current: current_whales(&ledger, &wcfg),
    }))
}

/// Every stage over one load. Whale outputs are skipped with a warning when
/// no token contract is known or inferable.
pub fn cmd_all(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut run = Run::start(cfg)?;
    let mut written = Vec::new();
    if !cfg.inputs.is_empty() {
        step_ingest(&mut run)?;
        written.extend(run.finish("ingest")?);
    }
    step_bowtie(&mut run)?;
    written.extend(run.finish("bowtie")?);
    step_sankey(&mut run)?;
    written.extend(run.finish("sankey")?);
    let whales = if resolve_token(cfg, &run.data.edges).is_some() {
        let w = step_whales(&mut run)?;
        written.extend(run.finish("whales")?);
        Some(w)
    } else {
        eprintln!("warning: no token transfers found; skipping whale outputs");
        None
    };
    step_events(&mut run, whales)?;
    written.extend(run.finish("events")?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::slug;

    #[test]
    fn slugs() {
        assert_eq!(slug("Warner Music Group"), "warner_music_group");
        assert_eq!(
            slug("  SEC: Unregistered -- Security "),
            "sec_unregistered_security"
        );
        assert_eq!(slug("deadmau5"), "deadmau5");
    }
}
