//! Bow-tie decomposition of a directed graph.
//!
//! Given the core (the largest strongly connected component), every node is
//! placed in exactly one of seven categories:
//!
//! * `SCC`: the core itself.
//! * `IN`: reaches the core but is not reached by it.
//! * `OUT`: reached by the core but does not reach it.
//! * `TUBES`: reachable from `IN` and reaches `OUT`, with no core contact.
//! * `TENDRILS_IN`: reachable from `IN` but does not reach `OUT`.
//! * `TENDRILS_OUT`: reaches `OUT` but is not reachable from `IN`.
//! * `OTHER`: everything else.
//!
//! [`classify`] runs in time linear in nodes plus distinct pairs.
//! [`classify_bruteforce`] recomputes the same partition from full pairwise
//! reachability and exists as a verification oracle for small graphs.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, SimpleDigraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BowTieLabel {
    #[serde(rename = "SCC")]
    Scc,
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
    #[serde(rename = "TUBES")]
    Tubes,
    #[serde(rename = "TENDRILS_IN")]
    TendrilsIn,
    #[serde(rename = "TENDRILS_OUT")]
    TendrilsOut,
    #[serde(rename = "OTHER")]
    Other,
}

impl BowTieLabel {
    pub const ALL: [BowTieLabel; 7] = [
        BowTieLabel::Scc,
        BowTieLabel::In,
        BowTieLabel::Out,
        BowTieLabel::Tubes,
        BowTieLabel::TendrilsIn,
        BowTieLabel::TendrilsOut,
        BowTieLabel::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BowTieLabel::Scc => "SCC",
            BowTieLabel::In => "IN",
            BowTieLabel::Out => "OUT",
            BowTieLabel::Tubes => "TUBES",
            BowTieLabel::TendrilsIn => "TENDRILS_IN",
            BowTieLabel::TendrilsOut => "TENDRILS_OUT",
            BowTieLabel::Other => "OTHER",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BowTieLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BowTieLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BowTieLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown bow-tie label {s:?}"))
    }
}

/// Count per label, indexed by [`BowTieLabel::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts(pub [usize; 7]);

impl LabelCounts {
    pub fn get(&self, label: BowTieLabel) -> usize {
        self.0[label.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a BowTieLabel>) -> Self {
        let mut counts = [0usize; 7];
        for l in labels {
            counts[l.index()] += 1;
        }
        LabelCounts(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowTiePartition {
    pub labels: Vec<BowTieLabel>,
    /// The core is identified by its smallest node id.
    pub core_id: NodeId,
    pub sizes: LabelCounts,
}

impl BowTiePartition {
    pub fn label(&self, n: NodeId) -> BowTieLabel {
        self.labels[n as usize]
    }

    pub fn members(&self, label: BowTieLabel) -> Vec<NodeId> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == label)
            .map(|(i, _)| i as NodeId)
            .collect()
    }

    /// Labels cover exactly `node_count` nodes and the cached sizes agree
    /// with a recount.
    pub fn is_total(&self, node_count: usize) -> bool {
        self.labels.len() == node_count
            && self.sizes.total() == node_count
            && LabelCounts::from_labels(&self.labels) == self.sizes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BowTieError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("graph has {nodes} nodes, above the brute-force oracle bound {bound}")]
    OracleTooLarge { nodes: usize, bound: usize },
}

pub const DEFAULT_ORACLE_BOUND: usize = 2_000;

/// Maximal strongly connected components (iterative Tarjan).
///
/// Each component is sorted ascending and the list is ordered by each
/// component's smallest node id.
pub fn strongly_connected_components(g: &SimpleDigraph) -> Vec<Vec<NodeId>> {
    const UNSEEN: u32 = u32::MAX;
    let n = g.node_count();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0u32; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<NodeId> = Vec::new();
    // (node, position in its successor list)
    let mut frames: Vec<(NodeId, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut components = Vec::new();

    for root in 0..n as NodeId {
        if index[root as usize] != UNSEEN {
            continue;
        }
        frames.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut pos)) = frames.last_mut() {
            let succ = g.successors(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                let wi = w as usize;
                if index[wi] == UNSEEN {
                    index[wi] = next_index;
                    low[wi] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[wi] = true;
                    frames.push((w, 0));
                } else if on_stack[wi] {
                    low[v as usize] = low[v as usize].min(index[wi]);
                }
                continue;
            }
            frames.pop();
            if let Some(&(parent, _)) = frames.last() {
                low[parent as usize] = low[parent as usize].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components.sort_unstable_by_key(|c| c[0]);
    components
}

/// The largest component; ties go to the component with the smallest
/// minimum node id.
pub fn select_core(sccs: &[Vec<NodeId>]) -> Result<&[NodeId], BowTieError> {
    sccs.iter()
        .filter(|c| !c.is_empty())
        .min_by_key(|c| (std::cmp::Reverse(c.len()), c.iter().min().copied()))
        .map(Vec::as_slice)
        .ok_or(BowTieError::EmptyGraph)
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

/// Multi-source BFS. `blocked` nodes are never entered; sources are marked
/// visited.
fn bfs(g: &SimpleDigraph, sources: &[NodeId], dir: Direction, blocked: &[bool]) -> Vec<bool> {
    let mut seen = vec![false; g.node_count()];
    let mut queue: Vec<NodeId> = Vec::with_capacity(sources.len());
    for &s in sources {
        if !seen[s as usize] {
            seen[s as usize] = true;
            queue.push(s);
        }
    }
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        let next = match dir {
            Direction::Forward => g.successors(v),
            Direction::Backward => g.predecessors(v),
        };
        for &w in next {
            let wi = w as usize;
            if !seen[wi] && !blocked[wi] {
                seen[wi] = true;
                queue.push(w);
            }
        }
    }
    seen
}

/// Linear-time bow-tie classification.
pub fn classify(g: &SimpleDigraph) -> Result<BowTiePartition, BowTieError> {
    let sccs = strongly_connected_components(g);
    let core = select_core(&sccs)?;
    Ok(classify_with_core(g, core))
}

fn classify_with_core(g: &SimpleDigraph, core: &[NodeId]) -> BowTiePartition {
    let n = g.node_count();
    let mut in_core = vec![false; n];
    for &c in core {
        in_core[c as usize] = true;
    }
    let nothing_blocked = vec![false; n];
    let (reached_from_core, reaching_core) = rayon::join(
        || bfs(g, core, Direction::Forward, &nothing_blocked),
        || bfs(g, core, Direction::Backward, &nothing_blocked),
    );

    let mut labels = vec![BowTieLabel::Other; n];
    let mut in_nodes = Vec::new();
    let mut out_nodes = Vec::new();
    let mut settled = vec![false; n];
    for v in 0..n {
        if in_core[v] {
            labels[v] = BowTieLabel::Scc;
            settled[v] = true;
            continue;
        }
        match (reached_from_core[v], reaching_core[v]) {
            (true, true) => panic!("node {v} reaches and is reached by the core but is outside it"),
            (false, true) => {
                labels[v] = BowTieLabel::In;
                in_nodes.push(v as NodeId);
                settled[v] = true;
            }
            (true, false) => {
                labels[v] = BowTieLabel::Out;
                out_nodes.push(v as NodeId);
                settled[v] = true;
            }
            (false, false) => {}
        }
    }

    // Paths from IN to an unsettled node cannot pass through the core or OUT,
    // and paths from an unsettled node to OUT cannot pass through the core or
    // IN, so both searches may stay inside the unsettled region.
    let (from_in, to_out) = rayon::join(
        || bfs(g, &in_nodes, Direction::Forward, &settled),
        || bfs(g, &out_nodes, Direction::Backward, &settled),
    );
    for v in 0..n {
        if settled[v] {
            continue;
        }
        labels[v] = match (from_in[v], to_out[v]) {
            (true, true) => BowTieLabel::Tubes,
            (true, false) => BowTieLabel::TendrilsIn,
            (false, true) => BowTieLabel::TendrilsOut,
            (false, false) => BowTieLabel::Other,
        };
    }
    let sizes = LabelCounts::from_labels(&labels);
    BowTiePartition {
        labels,
        core_id: core.iter().copied().min().expect("core is non-empty"),
        sizes,
    }
}

/// Brute-force classification from the full reachability relation, computed
/// by one BFS per node. Only for graphs up to `bound` nodes.
pub fn classify_bruteforce(
    g: &SimpleDigraph,
    bound: usize,
) -> Result<BowTiePartition, BowTieError> {
    let n = g.node_count();
    if n > bound {
        return Err(BowTieError::OracleTooLarge { nodes: n, bound });
    }
    if n == 0 {
        return Err(BowTieError::EmptyGraph);
    }
    // reach[u][v]: a path of length >= 1 leads from u to v.
    let reach: Vec<Vec<bool>> = (0..n as NodeId)
        .map(|u| {
            let mut seen = vec![false; n];
            let mut queue: Vec<NodeId> = g.successors(u).to_vec();
            for &w in &queue {
                seen[w as usize] = true;
            }
            while let Some(v) = queue.pop() {
                for &w in g.successors(v) {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        queue.push(w);
                    }
                }
            }
            seen
        })
        .collect();

    // Mutual-reachability classes.
    let mut class_of = vec![usize::MAX; n];
    let mut classes: Vec<Vec<NodeId>> = Vec::new();
    for u in 0..n {
        if class_of[u] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let mut members = vec![u as NodeId];
        class_of[u] = id;
        for v in u + 1..n {
            if reach[u][v] && reach[v][u] {
                class_of[v] = id;
                members.push(v as NodeId);
            }
        }
        classes.push(members);
    }
    let mut best = 0;
    for (i, c) in classes.iter().enumerate() {
        // Classes are discovered in order of their minimum, so a strict
        // comparison keeps the smallest-minimum class on ties.
        if c.len() > classes[best].len() {
            best = i;
        }
    }
    let core = &classes[best];
    let in_core = |v: usize| class_of[v] == best;

    let mut labels = vec![BowTieLabel::Other; n];
    for v in 0..n {
        if in_core(v) {
            labels[v] = BowTieLabel::Scc;
            continue;
        }
        let from_core = core.iter().any(|&c| reach[c as usize][v]);
        let to_core = core.iter().any(|&c| reach[v][c as usize]);
        assert!(!(from_core && to_core), "core is not maximal at node {v}");
        if to_core {
            labels[v] = BowTieLabel::In;
        } else if from_core {
            labels[v] = BowTieLabel::Out;
        }
    }
    let in_set: Vec<usize> = (0..n).filter(|&v| labels[v] == BowTieLabel::In).collect();
    let out_set: Vec<usize> = (0..n).filter(|&v| labels[v] == BowTieLabel::Out).collect();
    for v in 0..n {
        if in_core(v) || matches!(labels[v], BowTieLabel::In | BowTieLabel::Out) {
            continue;
        }
        let from_in = in_set.iter().any(|&i| reach[i][v]);
        let to_out = out_set.iter().any(|&o| reach[v][o]);
        labels[v] = match (from_in, to_out) {
            (true, true) => BowTieLabel::Tubes,
            (true, false) => BowTieLabel::TendrilsIn,
            (false, true) => BowTieLabel::TendrilsOut,
            (false, false) => BowTieLabel::Other,
        };
    }
    let sizes = LabelCounts::from_labels(&labels);
    Ok(BowTiePartition {
        labels,
        core_id: core[0],
        sizes,
    })
}
