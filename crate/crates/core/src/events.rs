//! Daily activity series in a 61-day window around event dates.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::{Duration, NaiveDate};
use primitive_types::U256;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::Address;
use crate::bowtie::{BowTieLabel, BowTiePartition};
use crate::graph::SimpleDigraph;
use crate::ingest::NormalizedEdge;
use crate::temporal::{midnight_utc, SECONDS_PER_DAY};

/// Days on each side of the event date.
pub const WINDOW_HALF_WIDTH: i64 = 30;
pub const WINDOW_LEN: usize = 2 * WINDOW_HALF_WIDTH as usize + 1;

/// Built-in event list.
pub const DEFAULT_EVENTS_CSV: &str = include_str!("../data/events.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventCategory {
    Support,
    Scandal,
}

impl FromStr for EventCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "support" => Ok(EventCategory::Support),
            "scandal" => Ok(EventCategory::Scandal),
            other => Err(format!("unknown event category {other:?}")),
        }
    }
}

impl fmt::Display for EventCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventCategory::Support => "support",
            EventCategory::Scandal => "scandal",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventSpec {
    pub name: String,
    pub date: NaiveDate,
    pub category: EventCategory,
}

impl EventSpec {
    pub fn new(name: impl Into<String>, date: NaiveDate, category: EventCategory) -> Self {
        EventSpec {
            name: name.into(),
            date,
            category,
        }
    }

    fn day_number(&self) -> i64 {
        midnight_utc(self.date).div_euclid(SECONDS_PER_DAY)
    }

    /// Offset of `timestamp`'s UTC day from the event day, if in the window.
    pub fn offset_of(&self, timestamp: i64) -> Option<i64> {
        let d = timestamp.div_euclid(SECONDS_PER_DAY) - self.day_number();
        (-WINDOW_HALF_WIDTH..=WINDOW_HALF_WIDTH)
            .contains(&d)
            .then_some(d)
    }

    /// Whether any part of the window falls inside `[first_ts, last_ts]`.
    pub fn overlaps(&self, first_ts: i64, last_ts: i64) -> bool {
        let start = midnight_utc(self.date) - WINDOW_HALF_WIDTH * SECONDS_PER_DAY;
        let end = midnight_utc(self.date) + (WINDOW_HALF_WIDTH + 1) * SECONDS_PER_DAY - 1;
        start <= last_ts && first_ts <= end
    }
}

#[derive(Debug, Error)]
pub enum EventError {
    #[error("events file: {0}")]
    Csv(#[from] csv::Error),
    #[error("events file line {line}: {reason}")]
    BadRow { line: u64, reason: String },
}

/// Read a `name,date,category` CSV with ISO-8601 dates.
pub fn load_events<R: Read>(input: R) -> Result<Vec<EventSpec>, EventError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| EventError::BadRow { line, reason };
        let field = |i: usize, name: &str| {
            row.get(i)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| bad(format!("missing {name}")))
        };
        let name = field(0, "name")?;
        let date = NaiveDate::parse_from_str(field(1, "date")?, "%Y-%m-%d")
            .map_err(|e| bad(format!("date: {e}")))?;
        let category = field(2, "category")?.parse().map_err(bad)?;
        out.push(EventSpec::new(name, date, category));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GroupCounts {
    pub scc: u64,
    #[serde(rename = "in")]
    pub in_: u64,
    pub out: u64,
}

impl GroupCounts {
    pub fn total(&self) -> u64 {
        self.scc + self.in_ + self.out
    }

    fn add(&mut self, label: BowTieLabel) {
        match label {
            BowTieLabel::Scc => self.scc += 1,
            BowTieLabel::In => self.in_ += 1,
            BowTieLabel::Out => self.out += 1,
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DayBucket {
    pub offset: i64,
    pub day: NaiveDate,
    pub tx_count: u64,
    /// Saturates at the 256-bit maximum.
    #[serde(serialize_with = "crate::report::serialize_decimal")]
    pub value_total: U256,
    pub groups: Option<GroupCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventWindowSeries {
    pub event: EventSpec,
    pub buckets: Vec<DayBucket>,
}

impl EventWindowSeries {
    fn empty(event: &EventSpec, with_groups: bool) -> Self {
        let buckets = (-WINDOW_HALF_WIDTH..=WINDOW_HALF_WIDTH)
            .map(|offset| DayBucket {
                offset,
                day: event.date + Duration::days(offset),
                tx_count: 0,
                value_total: U256::zero(),
                groups: with_groups.then(GroupCounts::default),
            })
            .collect();
        EventWindowSeries {
            event: event.clone(),
            buckets,
        }
    }

    fn bucket_mut(&mut self, offset: i64) -> &mut DayBucket {
        &mut self.buckets[(offset + WINDOW_HALF_WIDTH) as usize]
    }

    pub fn total_tx(&self) -> u64 {
        self.buckets.iter().map(|b| b.tx_count).sum()
    }

    /// Offset of the busiest day; the earliest wins ties.
    pub fn peak_offset(&self) -> i64 {
        self.buckets
            .iter()
            .max_by_key(|b| (b.tx_count, std::cmp::Reverse(b.offset)))
            .map_or(0, |b| b.offset)
    }
}

/// Which endpoint's bow-tie label a transaction is attributed to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribution {
    #[default]
    Sender,
    Receiver,
    /// The sender's label when it is SCC, IN or OUT, otherwise the receiver's.
    Either,
}

impl FromStr for Attribution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sender" => Ok(Attribution::Sender),
            "receiver" => Ok(Attribution::Receiver),
            "either" => Ok(Attribution::Either),
            other => Err(format!("unknown attribution mode {other:?}")),
        }
    }
}

impl fmt::Display for Attribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribution::Sender => "sender",
            Attribution::Receiver => "receiver",
            Attribution::Either => "either",
        })
    }
}

fn is_group(label: BowTieLabel) -> bool {
    matches!(label, BowTieLabel::Scc | BowTieLabel::In | BowTieLabel::Out)
}

/// Resolves an address to its label in a partition.
#[derive(Clone, Copy)]
pub struct PartitionLookup<'a> {
    pub partition: &'a BowTiePartition,
    pub graph: &'a SimpleDigraph,
}

impl PartitionLookup<'_> {
    pub fn label(&self, addr: &Address) -> Option<BowTieLabel> {
        self.graph.node_id(addr).map(|n| self.partition.label(n))
    }

    fn attribute(&self, e: &NormalizedEdge, mode: Attribution) -> Option<BowTieLabel> {
        match mode {
            Attribution::Sender => self.label(&e.src),
            Attribution::Receiver => self.label(&e.dst),
            Attribution::Either => self
                .label(&e.src)
                .filter(|l| is_group(*l))
                .or_else(|| self.label(&e.dst)),
        }
    }
}

fn accumulate<'e>(
    edges: impl IntoIterator<Item = &'e NormalizedEdge>,
    event: &EventSpec,
    filter: Option<&HashSet<Address>>,
    groups: Option<(PartitionLookup<'_>, Attribution)>,
) -> EventWindowSeries {
    let mut series = EventWindowSeries::empty(event, groups.is_some());
    for e in edges {
        let Some(offset) = event.offset_of(e.timestamp) else {
            continue;
        };
        if let Some(f) = filter {
            if !f.contains(&e.src) && !f.contains(&e.dst) {
                continue;
            }
        }
        let bucket = series.bucket_mut(offset);
        bucket.tx_count += 1;
        bucket.value_total = bucket.value_total.saturating_add(e.value);
        if let (Some((lookup, mode)), Some(g)) = (groups, bucket.groups.as_mut()) {
            if let Some(label) = lookup.attribute(e, mode) {
                g.add(label);
            }
        }
    }
    series
}

/// Transaction counts and value totals per day; with a filter, only
/// transactions with an endpoint in the filter set count.
pub fn daily_series(
    edges: &[NormalizedEdge],
    event: &EventSpec,
    filter: Option<&HashSet<Address>>,
) -> EventWindowSeries {
    accumulate(edges, event, filter, None)
}

/// Daily series with SCC/IN/OUT sub-counts taken from the partition label of
/// the attributed endpoint.
pub fn group_split_series(
    edges: &[NormalizedEdge],
    event: &EventSpec,
    lookup: PartitionLookup<'_>,
    mode: Attribution,
) -> EventWindowSeries {
    accumulate(edges, event, None, Some((lookup, mode)))
}

/// Transactions involving at least one whale.
pub fn whale_series(
    edges: &[NormalizedEdge],
    event: &EventSpec,
    whales: &HashSet<Address>,
) -> EventWindowSeries {
    daily_series(edges, event, Some(whales))
}

/// Group-split series for every event, computed in parallel.
pub fn group_split_all(
    edges: &[NormalizedEdge],
    events: &[EventSpec],
    lookup: PartitionLookup<'_>,
    mode: Attribution,
) -> Vec<EventWindowSeries> {
    events
        .par_iter()
        .map(|ev| group_split_series(edges, ev, lookup, mode))
        .collect()
}

pub fn whale_series_all(
    edges: &[NormalizedEdge],
    events: &[EventSpec],
    whales: &HashSet<Address>,
) -> Vec<EventWindowSeries> {
    events
        .par_iter()
        .map(|ev| whale_series(edges, ev, whales))
        .collect()
}
