//! Immutable interned directed graph.
//!
//! Nodes are addresses interned in first-seen order. Adjacency is stored in
//! compressed sparse row form in both directions; parallel transactions
//! between the same ordered pair collapse into one adjacency entry with a
//! multiplicity count.

use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::address::Address;
use crate::ingest::NormalizedEdge;

pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("{what} count {count} exceeds the configured bound {limit}")]
    CapacityExceeded {
        what: &'static str,
        count: usize,
        limit: usize,
    },
    #[error("node {0} is out of range")]
    NodeOutOfRange(NodeId),
    #[error("average over an empty population")]
    EmptyPopulation,
}

#[derive(Debug, Clone, Copy)]
pub struct GraphLimits {
    pub max_nodes: usize,
    pub max_edges: usize,
}

impl Default for GraphLimits {
    fn default() -> Self {
        GraphLimits {
            max_nodes: NodeId::MAX as usize,
            max_edges: usize::MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleDigraph {
    nodes: Vec<Address>,
    index: HashMap<Address, NodeId>,
    fwd_offsets: Vec<usize>,
    fwd_targets: Vec<NodeId>,
    fwd_mult: Vec<u64>,
    rev_offsets: Vec<usize>,
    rev_sources: Vec<NodeId>,
    transactions: u64,
}

/// Build a graph from normalized edges with default limits.
pub fn build_graph(edges: &[NormalizedEdge]) -> SimpleDigraph {
    build_graph_with_limits(edges, GraphLimits::default())
        .expect("default limits cover every graph addressable by NodeId")
}

pub fn build_graph_with_limits(
    edges: &[NormalizedEdge],
    limits: GraphLimits,
) -> Result<SimpleDigraph, GraphError> {
    build_from_address_pairs(edges.iter().map(|e| (e.src, e.dst)), limits)
}

/// Intern addresses in first-seen order (source before destination) and
/// build the graph.
pub fn build_from_address_pairs(
    pairs: impl IntoIterator<Item = (Address, Address)>,
    limits: GraphLimits,
) -> Result<SimpleDigraph, GraphError> {
    let mut nodes = Vec::new();
    let mut index: HashMap<Address, NodeId> = HashMap::new();
    let mut id_pairs = Vec::new();
    let max_nodes = limits.max_nodes.min(NodeId::MAX as usize);
    let mut intern = |a: Address, nodes: &mut Vec<Address>| -> Result<NodeId, GraphError> {
        if let Some(&id) = index.get(&a) {
            return Ok(id);
        }
        if nodes.len() >= max_nodes {
            return Err(GraphError::CapacityExceeded {
                what: "node",
                count: nodes.len() + 1,
                limit: max_nodes,
            });
        }
        let id = nodes.len() as NodeId;
        nodes.push(a);
        index.insert(a, id);
        Ok(id)
    };
    for (src, dst) in pairs {
        if id_pairs.len() >= limits.max_edges {
            return Err(GraphError::CapacityExceeded {
                what: "edge",
                count: id_pairs.len() + 1,
                limit: limits.max_edges,
            });
        }
        let s = intern(src, &mut nodes)?;
        let d = intern(dst, &mut nodes)?;
        id_pairs.push((s, d));
    }
    Ok(SimpleDigraph::assemble(nodes, index, id_pairs))
}

impl SimpleDigraph {
    /// Graph over `n` nodes with synthetic addresses, from raw index pairs.
    /// Node ids are the indices themselves.
    pub fn from_index_pairs(n: usize, pairs: &[(NodeId, NodeId)]) -> SimpleDigraph {
        assert!(n <= NodeId::MAX as usize);
        let nodes: Vec<Address> = (0..n as u64).map(|i| Address::synthetic(0, i)).collect();
        let index = nodes
            .iter()
            .enumerate()
            .map(|(i, a)| (*a, i as NodeId))
            .collect();
        for &(s, d) in pairs {
            assert!(
                (s as usize) < n && (d as usize) < n,
                "pair ({s}, {d}) out of range"
            );
        }
        SimpleDigraph::assemble(nodes, index, pairs.to_vec())
    }

    fn assemble(
        nodes: Vec<Address>,
        index: HashMap<Address, NodeId>,
        pairs: Vec<(NodeId, NodeId)>,
    ) -> SimpleDigraph {
        let n = nodes.len();
        let transactions = pairs.len() as u64;
        let mut keys: Vec<u64> = pairs
            .into_iter()
            .map(|(s, d)| ((s as u64) << 32) | d as u64)
            .collect();
        keys.sort_unstable();

        let mut fwd_offsets = vec![0usize; n + 1];
        let mut fwd_targets = Vec::new();
        let mut fwd_mult: Vec<u64> = Vec::new();
        let mut last = None;
        for key in keys {
            if last == Some(key) {
                *fwd_mult.last_mut().unwrap() += 1;
                continue;
            }
            last = Some(key);
            let src = (key >> 32) as usize;
            fwd_offsets[src + 1] += 1;
            fwd_targets.push(key as u32);
            fwd_mult.push(1);
        }
        for i in 0..n {
            fwd_offsets[i + 1] += fwd_offsets[i];
        }

        let mut rev_offsets = vec![0usize; n + 1];
        for &t in &fwd_targets {
            rev_offsets[t as usize + 1] += 1;
        }
        for i in 0..n {
            rev_offsets[i + 1] += rev_offsets[i];
        }
        let mut cursor = rev_offsets.clone();
        let mut rev_sources = vec![0 as NodeId; fwd_targets.len()];
        // Sources are visited in ascending order, so each reverse list comes
        // out sorted.
        for src in 0..n {
            for &t in &fwd_targets[fwd_offsets[src]..fwd_offsets[src + 1]] {
                let slot = &mut cursor[t as usize];
                rev_sources[*slot] = src as NodeId;
                *slot += 1;
            }
        }

        SimpleDigraph {
            nodes,
            index,
            fwd_offsets,
            fwd_targets,
            fwd_mult,
            rev_offsets,
            rev_sources,
            transactions,
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Number of distinct ordered (src, dst) pairs.
    pub fn pair_count(&self) -> usize {
        self.fwd_targets.len()
    }

    /// Number of underlying transactions, i.e. the multiplicity sum.
    pub fn transaction_count(&self) -> u64 {
        self.transactions
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn successors(&self, n: NodeId) -> &[NodeId] {
        let n = n as usize;
        &self.fwd_targets[self.fwd_offsets[n]..self.fwd_offsets[n + 1]]
    }

    pub fn predecessors(&self, n: NodeId) -> &[NodeId] {
        let n = n as usize;
        &self.rev_sources[self.rev_offsets[n]..self.rev_offsets[n + 1]]
    }

    /// Successors of `n` paired with the multiplicity of each pair.
    pub fn successors_with_multiplicity(
        &self,
        n: NodeId,
    ) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        let range = self.fwd_offsets[n as usize]..self.fwd_offsets[n as usize + 1];
        self.fwd_targets[range.clone()]
            .iter()
            .copied()
            .zip(self.fwd_mult[range].iter().copied())
    }

    pub fn multiplicity(&self, src: NodeId, dst: NodeId) -> u64 {
        if src as usize >= self.node_count() {
            return 0;
        }
        let start = self.fwd_offsets[src as usize];
        match self.successors(src).binary_search(&dst) {
            Ok(i) => self.fwd_mult[start + i],
            Err(_) => 0,
        }
    }

    pub fn address(&self, n: NodeId) -> Address {
        self.nodes[n as usize]
    }

    pub fn addresses(&self) -> &[Address] {
        &self.nodes
    }

    pub fn node_id(&self, addr: &Address) -> Option<NodeId> {
        self.index.get(addr).copied()
    }

    /// All distinct ordered pairs in (src, dst) order.
    pub fn pairs(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.node_count() as NodeId)
            .flat_map(move |s| self.successors(s).iter().map(move |&d| (s, d)))
    }

    /// Number of distinct counterparties of `n`, ignoring direction. A self
    /// loop counts the node itself once.
    pub fn distinct_neighbor_degree(&self, n: NodeId) -> Result<usize, GraphError> {
        if n as usize >= self.node_count() {
            return Err(GraphError::NodeOutOfRange(n));
        }
        Ok(sorted_union_len(self.successors(n), self.predecessors(n)))
    }

    /// Mean distinct-neighbour degree over `subset` (or every node) minus
    /// `exclude`. Degrees are always taken against the whole graph.
    pub fn average_degree(
        &self,
        subset: Option<&HashSet<NodeId>>,
        exclude: Option<&HashSet<NodeId>>,
    ) -> Result<AverageDegree, GraphError> {
        for set in [subset, exclude].into_iter().flatten() {
            if let Some(&bad) = set.iter().find(|&&n| n as usize >= self.node_count()) {
                return Err(GraphError::NodeOutOfRange(bad));
            }
        }
        let excluded = |n: &NodeId| exclude.is_some_and(|ex| ex.contains(n));
        let mut avg = AverageDegree::default();
        let mut add = |n: NodeId| {
            avg.degree_sum += sorted_union_len(self.successors(n), self.predecessors(n)) as u64;
            avg.population += 1;
        };
        match subset {
            Some(set) => set.iter().filter(|n| !excluded(n)).for_each(|&n| add(n)),
            None => (0..self.node_count() as NodeId)
                .filter(|n| !excluded(n))
                .for_each(add),
        }
        if avg.population == 0 {
            return Err(GraphError::EmptyPopulation);
        }
        Ok(avg)
    }
}

fn sorted_union_len(a: &[NodeId], b: &[NodeId]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
        count += 1;
    }
    count + (a.len() - i) + (b.len() - j)
}

/// An exact mean, kept as a sum over a population count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AverageDegree {
    pub degree_sum: u64,
    pub population: u64,
}

impl AverageDegree {
    pub fn value(&self) -> f64 {
        self.degree_sum as f64 / self.population as f64
    }
}
