//! Tabular and JSON writers for every artifact the pipeline emits.
//!
//! CSV output follows RFC 4180 (via the `csv` crate). Amounts are always
//! rendered as exact decimal strings.

use std::io::Write;

use serde::Serialize;

use crate::address::Address;
use crate::bowtie::{BowTieLabel, BowTiePartition, LabelCounts};
use crate::events::EventWindowSeries;
use crate::graph::SimpleDigraph;
use crate::ingest::{Format, TransactionRecord};
use crate::temporal::{FlowMatrix, LabeledSnapshot};
use crate::whales::BalanceLedger;

pub const SCHEMA_VERSION: u32 = 1;

/// Serialize a 256-bit amount as a decimal string.
pub fn serialize_decimal<S: serde::Serializer>(
    v: &primitive_types::U256,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    serializer.collect_str(v)
}

pub const RECORD_COLUMNS: [&str; 9] = [
    "hash",
    "logIndex",
    "from",
    "to",
    "contractAddress",
    "timeStamp",
    "value",
    "kind",
    "tokenContract",
];

fn opt_addr(a: &Option<Address>) -> String {
    a.map(|a| a.to_string()).unwrap_or_default()
}

fn record_fields(r: &TransactionRecord) -> [String; 9] {
    [
        r.tx_id.clone(),
        r.log_index.to_string(),
        r.sender.to_string(),
        opt_addr(&r.target),
        opt_addr(&r.contract),
        r.timestamp.to_string(),
        r.value.to_string(),
        r.kind.as_str().to_string(),
        opt_addr(&r.token_contract),
    ]
}

/// Write records in the ingest input format, so `parse_records` reads them
/// back unchanged.
pub fn write_records<W: Write>(
    records: &[TransactionRecord],
    format: Format,
    out: W,
) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(RECORD_COLUMNS)?;
            for r in records {
                w.write_record(record_fields(r))?;
            }
            w.flush()
        }
        Format::JsonLines => {
            let mut out = std::io::BufWriter::new(out);
            for r in records {
                let obj: serde_json::Map<String, serde_json::Value> = RECORD_COLUMNS
                    .iter()
                    .zip(record_fields(r))
                    .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
                    .collect();
                serde_json::to_writer(&mut out, &obj)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
    }
}

/// `address,node_id,label`, one row per node in id order.
pub fn write_partition_csv<W: Write>(
    graph: &SimpleDigraph,
    partition: &BowTiePartition,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["address", "node_id", "label"])?;
    for (id, (addr, label)) in graph.addresses().iter().zip(&partition.labels).enumerate() {
        w.write_record([addr.to_string(), id.to_string(), label.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryShare {
    pub label: BowTieLabel,
    pub count: usize,
    pub percent: f64,
}

pub fn category_shares(sizes: &LabelCounts) -> Vec<CategoryShare> {
    let total = sizes.total();
    BowTieLabel::ALL
        .iter()
        .map(|&label| {
            let count = sizes.get(label);
            let percent = if total == 0 {
                0.0
            } else {
                100.0 * count as f64 / total as f64
            };
            CategoryShare {
                label,
                count,
                percent,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CoreInfo {
    pub node_id: u32,
    pub address: Address,
    pub size: usize,
    pub selection: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct BowTieSummary {
    pub schema_version: u32,
    pub node_count: usize,
    pub distinct_pairs: usize,
    pub transactions: u64,
    pub categories: Vec<CategoryShare>,
    pub core: Option<CoreInfo>,
    pub verified_by_bruteforce: bool,
}

pub const CORE_SELECTION_RULE: &str = "largest SCC; ties broken by smallest minimum node id";

impl BowTieSummary {
    pub fn new(
        graph: &SimpleDigraph,
        partition: Option<&BowTiePartition>,
        verified_by_bruteforce: bool,
    ) -> Self {
        let sizes = partition.map(|p| p.sizes).unwrap_or_default();
        BowTieSummary {
            schema_version: SCHEMA_VERSION,
            node_count: graph.node_count(),
            distinct_pairs: graph.pair_count(),
            transactions: graph.transaction_count(),
            categories: category_shares(&sizes),
            core: partition.map(|p| CoreInfo {
                node_id: p.core_id,
                address: graph.address(p.core_id),
                size: p.sizes.get(BowTieLabel::Scc),
                selection: CORE_SELECTION_RULE,
            }),
            verified_by_bruteforce,
        }
    }
}

/// `address,final_net,peak_net,is_current,is_historical,bowtie_label` for
/// every ledger account. The label is empty when the address is not a node.
pub fn write_whale_csv<W: Write>(
    ledger: &BalanceLedger,
    threshold: primitive_types::U256,
    graph: &SimpleDigraph,
    partition: Option<&BowTiePartition>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "address",
        "final_net",
        "peak_net",
        "is_current",
        "is_historical",
        "bowtie_label",
    ])?;
    for (addr, acct) in &ledger.accounts {
        let label = match (graph.node_id(addr), partition) {
            (Some(n), Some(p)) => p.label(n).as_str(),
            _ => "",
        };
        w.write_record([
            addr.to_string(),
            acct.final_net.to_string(),
            acct.peak_net.to_string(),
            acct.final_net.at_least(threshold).to_string(),
            acct.peak_net.at_least(threshold).to_string(),
            label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `source_label,target_label,cut_from,cut_to,count`, non-zero cells only.
pub fn write_flow_csv<'a, W: Write>(
    flows: impl IntoIterator<Item = &'a FlowMatrix>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "source_label",
        "target_label",
        "cut_from",
        "cut_to",
        "count",
    ])?;
    for f in flows {
        for (from, to, count) in f.cells() {
            w.write_record([
                from.as_str().to_string(),
                to.as_str().to_string(),
                f.cut_from.to_string(),
                f.cut_to.to_string(),
                count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineEntry {
    pub cut: i64,
    pub cut_utc: String,
    pub present: usize,
    pub future: usize,
    pub categories: Vec<CategoryShare>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimelineReport {
    pub schema_version: u32,
    pub universe: usize,
    pub snapshots: Vec<TimelineEntry>,
    pub scc_monotonicity_violations: usize,
}

pub fn utc_string(ts: i64) -> String {
    chrono::DateTime::from_timestamp(ts, 0)
        .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| ts.to_string())
}

impl TimelineReport {
    pub fn new(timeline: &[LabeledSnapshot], universe: usize, violations: usize) -> Self {
        TimelineReport {
            schema_version: SCHEMA_VERSION,
            universe,
            snapshots: timeline
                .iter()
                .map(|s| TimelineEntry {
                    cut: s.cut,
                    cut_utc: utc_string(s.cut),
                    present: s.membership.len(),
                    future: universe - s.membership.len(),
                    categories: category_shares(&s.sizes()),
                })
                .collect(),
            scc_monotonicity_violations: violations,
        }
    }
}

const SERIES_COLUMNS: [&str; 7] = [
    "offset",
    "day",
    "tx_count",
    "value_total",
    "scc_count",
    "in_count",
    "out_count",
];

fn series_cells(b: &crate::events::DayBucket) -> [String; 7] {
    let g = b.groups.unwrap_or_default();
    let group = |v: u64| {
        if b.groups.is_some() {
            v.to_string()
        } else {
            String::new()
        }
    };
    [
        b.offset.to_string(),
        b.day.format("%Y-%m-%d").to_string(),
        b.tx_count.to_string(),
        b.value_total.to_string(),
        group(g.scc),
        group(g.in_),
        group(g.out),
    ]
}

/// Per-event CSV: `offset,day,tx_count,value_total,scc_count,in_count,out_count`.
/// Group columns are empty for series without sub-counts.
pub fn write_series_csv<W: Write>(series: &EventWindowSeries, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_COLUMNS)?;
    for b in &series.buckets {
        w.write_record(series_cells(b))?;
    }
    w.flush()?;
    Ok(())
}

/// Long format across events and series kinds, for faceted grid plots.
pub fn write_long_series_csv<'a, W: Write>(
    rows: impl IntoIterator<Item = (&'a str, &'a EventWindowSeries)>,
    out: W,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["event", "category", "event_date", "series"];
    header.extend(SERIES_COLUMNS);
    w.write_record(&header)?;
    for (kind, s) in rows {
        for b in &s.buckets {
            let mut row = vec![
                s.event.name.clone(),
                s.event.category.to_string(),
                s.event.date.format("%Y-%m-%d").to_string(),
                kind.to_string(),
            ];
            row.extend(series_cells(b));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A minimal Vega-Lite specification over the long-format series file.
pub fn chart_spec(
    title: &str,
    data_file: &str,
    filter: &str,
    y_field: &str,
    stacked_groups: bool,
) -> serde_json::Value {
    let mut spec = serde_json::json!({
        "$schema": "https://vega.github.io/schema/vega-lite/v5.json",
        "schema_version": SCHEMA_VERSION,
        "title": title,
        "data": { "url": data_file, "format": { "type": "csv" } },
        "transform": [ { "filter": filter } ],
    });
    let obj = spec.as_object_mut().unwrap();
    if stacked_groups {
        obj.insert(
            "transform".into(),
            serde_json::json!([
                { "filter": filter },
                { "fold": ["scc_count", "out_count", "in_count"], "as": ["group", "count"] }
            ]),
        );
        obj.insert("mark".into(), serde_json::json!("bar"));
        obj.insert(
            "encoding".into(),
            serde_json::json!({
                "x": { "field": "offset", "type": "ordinal", "title": "days from event" },
                "y": { "field": "count", "type": "quantitative", "stack": "zero" },
                "color": { "field": "group", "type": "nominal" },
                "facet": { "field": "event", "type": "nominal" }
            }),
        );
    } else {
        obj.insert("mark".into(), serde_json::json!("line"));
        obj.insert(
            "encoding".into(),
            serde_json::json!({
                "x": { "field": "offset", "type": "quantitative", "title": "days from event" },
                "y": { "field": y_field, "type": "quantitative" },
                "facet": { "field": "event", "type": "nominal", "columns": 4 }
            }),
        );
    }
    spec
}
