//! Cumulative snapshots and category flows between them.

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::address::Address;
use crate::bowtie::{classify, BowTieError, BowTieLabel, LabelCounts};
use crate::graph::{build_graph, SimpleDigraph};
use crate::ingest::NormalizedEdge;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemporalError {
    #[error("snapshot spec needs at least one cut")]
    NoCuts,
    #[error("snapshot cuts must be strictly increasing (cut {index} is {cut})")]
    NotIncreasing { index: usize, cut: i64 },
    #[error("flow source cut {from} is not before destination cut {to}")]
    CutsOutOfOrder { from: i64, to: i64 },
    #[error("address {0} is labelled in a snapshot but missing from the universe")]
    InconsistentUniverse(Address),
    #[error(transparent)]
    BowTie(#[from] BowTieError),
}

/// Cumulative snapshot cut points: each snapshot holds every edge with a
/// timestamp at or before its cut.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotSpec {
    cuts: Vec<i64>,
}

impl SnapshotSpec {
    pub fn new(cuts: Vec<i64>) -> Result<Self, TemporalError> {
        if cuts.is_empty() {
            return Err(TemporalError::NoCuts);
        }
        if let Some(i) = (1..cuts.len()).find(|&i| cuts[i] <= cuts[i - 1]) {
            return Err(TemporalError::NotIncreasing {
                index: i,
                cut: cuts[i],
            });
        }
        Ok(SnapshotSpec { cuts })
    }

    /// One cut per distinct event date: midnight UTC of the date plus
    /// `offset_days`.
    pub fn from_event_dates(
        dates: impl IntoIterator<Item = NaiveDate>,
        offset_days: i64,
    ) -> Result<Self, TemporalError> {
        let cuts: BTreeSet<i64> = dates
            .into_iter()
            .map(|d| midnight_utc(d) + offset_days * SECONDS_PER_DAY)
            .collect();
        SnapshotSpec::new(cuts.into_iter().collect())
    }

    pub fn cuts(&self) -> &[i64] {
        &self.cuts
    }
}

pub const SECONDS_PER_DAY: i64 = 86_400;

pub fn midnight_utc(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSnapshot {
    pub cut: i64,
    pub membership: BTreeMap<Address, BowTieLabel>,
}

impl LabeledSnapshot {
    pub fn sizes(&self) -> LabelCounts {
        LabelCounts::from_labels(self.membership.values())
    }
}

fn is_time_sorted(edges: &[NormalizedEdge]) -> bool {
    edges.windows(2).all(|w| w[0].timestamp <= w[1].timestamp)
}

/// Graph over exactly the edges with `timestamp <= cut`. Unsorted input is
/// stably sorted by timestamp first, so node ids follow chronological
/// first appearance either way.
pub fn snapshot_graph(edges: &[NormalizedEdge], cut: i64) -> SimpleDigraph {
    if is_time_sorted(edges) {
        let end = edges.partition_point(|e| e.timestamp <= cut);
        build_graph(&edges[..end])
    } else {
        let mut kept: Vec<NormalizedEdge> = edges
            .iter()
            .filter(|e| e.timestamp <= cut)
            .cloned()
            .collect();
        kept.sort_by_key(|e| e.timestamp);
        build_graph(&kept)
    }
}

fn label_graph(g: &SimpleDigraph, cut: i64) -> Result<LabeledSnapshot, TemporalError> {
    let mut membership = BTreeMap::new();
    // No edges yet means no addresses to label.
    if !g.is_empty() {
        let p = classify(g)?;
        for (addr, label) in g.addresses().iter().zip(&p.labels) {
            membership.insert(*addr, *label);
        }
    }
    Ok(LabeledSnapshot { cut, membership })
}

/// Label every cumulative snapshot with its bow-tie decomposition.
/// Snapshots are independent and are labelled in parallel.
pub fn membership_timeline(
    edges: &[NormalizedEdge],
    spec: &SnapshotSpec,
) -> Result<Vec<LabeledSnapshot>, TemporalError> {
    let sorted_storage;
    let edges = if is_time_sorted(edges) {
        edges
    } else {
        let mut v = edges.to_vec();
        v.sort_by_key(|e| e.timestamp);
        sorted_storage = v;
        &sorted_storage
    };
    spec.cuts()
        .par_iter()
        .map(|&cut| label_graph(&snapshot_graph(edges, cut), cut))
        .collect()
}

/// Every address that appears as a source or destination.
pub fn address_universe(edges: &[NormalizedEdge]) -> BTreeSet<Address> {
    edges.iter().flat_map(|e| [e.src, e.dst]).collect()
}

/// A bow-tie label, or `Future` for an address not yet in the snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowCategory {
    Present(BowTieLabel),
    Future,
}

impl FlowCategory {
    pub const ALL: [FlowCategory; 8] = [
        FlowCategory::Present(BowTieLabel::Scc),
        FlowCategory::Present(BowTieLabel::In),
        FlowCategory::Present(BowTieLabel::Out),
        FlowCategory::Present(BowTieLabel::Tubes),
        FlowCategory::Present(BowTieLabel::TendrilsIn),
        FlowCategory::Present(BowTieLabel::TendrilsOut),
        FlowCategory::Present(BowTieLabel::Other),
        FlowCategory::Future,
    ];

    pub fn index(self) -> usize {
        match self {
            FlowCategory::Present(l) => l.index(),
            FlowCategory::Future => 7,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FlowCategory::Present(l) => l.as_str(),
            FlowCategory::Future => "FUTURE",
        }
    }

    fn of(label: Option<&BowTieLabel>) -> FlowCategory {
        label.map_or(FlowCategory::Future, |l| FlowCategory::Present(*l))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlowMatrix {
    pub cut_from: i64,
    pub cut_to: i64,
    /// `counts[from][to]`, indexed by [`FlowCategory::index`].
    pub counts: [[u64; 8]; 8],
}

impl FlowMatrix {
    pub fn get(&self, from: FlowCategory, to: FlowCategory) -> u64 {
        self.counts[from.index()][to.index()]
    }

    pub fn row_sums(&self) -> [u64; 8] {
        let mut out = [0; 8];
        for (i, row) in self.counts.iter().enumerate() {
            out[i] = row.iter().sum();
        }
        out
    }

    pub fn column_sums(&self) -> [u64; 8] {
        let mut out = [0; 8];
        for row in &self.counts {
            for (j, c) in row.iter().enumerate() {
                out[j] += c;
            }
        }
        out
    }

    /// Non-zero cells in category order.
    pub fn cells(&self) -> impl Iterator<Item = (FlowCategory, FlowCategory, u64)> + '_ {
        FlowCategory::ALL.into_iter().flat_map(move |f| {
            FlowCategory::ALL
                .into_iter()
                .map(move |t| (f, t, self.get(f, t)))
                .filter(|c| c.2 > 0)
        })
    }

    /// Row sums reproduce `a`'s sizes and column sums reproduce `b`'s sizes,
    /// with the FUTURE slots holding the addresses absent from each side.
    pub fn is_conserved(&self, a: &LabeledSnapshot, b: &LabeledSnapshot, universe: usize) -> bool {
        let expect = |s: &LabeledSnapshot| {
            let sizes = s.sizes();
            let mut v = [0u64; 8];
            for l in BowTieLabel::ALL {
                v[l.index()] = sizes.get(l) as u64;
            }
            v[7] = (universe - s.membership.len()) as u64;
            v
        };
        self.row_sums() == expect(a) && self.column_sums() == expect(b)
    }
}

/// Count addresses moving between categories from snapshot `a` to `b`.
pub fn flow_matrix(
    a: &LabeledSnapshot,
    b: &LabeledSnapshot,
    universe: &BTreeSet<Address>,
) -> Result<FlowMatrix, TemporalError> {
    if a.cut >= b.cut {
        return Err(TemporalError::CutsOutOfOrder {
            from: a.cut,
            to: b.cut,
        });
    }
    for addr in a.membership.keys().chain(b.membership.keys()) {
        if !universe.contains(addr) {
            return Err(TemporalError::InconsistentUniverse(*addr));
        }
    }
    let mut counts = [[0u64; 8]; 8];
    for addr in universe {
        let from = FlowCategory::of(a.membership.get(addr));
        let to = FlowCategory::of(b.membership.get(addr));
        counts[from.index()][to.index()] += 1;
    }
    Ok(FlowMatrix {
        cut_from: a.cut,
        cut_to: b.cut,
        counts,
    })
}

/// Flow matrices for each consecutive pair of snapshots.
pub fn consecutive_flows(
    timeline: &[LabeledSnapshot],
    universe: &BTreeSet<Address>,
) -> Result<Vec<FlowMatrix>, TemporalError> {
    timeline
        .windows(2)
        .map(|w| flow_matrix(&w[0], &w[1], universe))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SccViolation {
    pub address: Address,
    pub scc_cut: i64,
    pub later_cut: i64,
}

/// Every (address, earlier cut, later cut) where the address was in the
/// core at the earlier cut and outside it at the later one.
pub fn check_scc_monotone(timeline: &[LabeledSnapshot]) -> Vec<SccViolation> {
    let mut violations = Vec::new();
    for (i, earlier) in timeline.iter().enumerate() {
        for (addr, label) in &earlier.membership {
            if *label != BowTieLabel::Scc {
                continue;
            }
            for later in &timeline[i + 1..] {
                if later.membership.get(addr) != Some(&BowTieLabel::Scc) {
                    violations.push(SccViolation {
                        address: *addr,
                        scc_cut: earlier.cut,
                        later_cut: later.cut,
                    });
                }
            }
        }
    }
    violations
}
