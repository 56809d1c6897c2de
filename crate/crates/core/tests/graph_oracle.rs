mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use common::rng;
use rand::Rng;
use sandgraph::graph::{build_graph_with_limits, GraphError, GraphLimits};
use sandgraph::ingest::{NormalizedEdge, TxKind};
use sandgraph::{build_graph, Address, U256};

fn edge(src: Address, dst: Address, i: u64) -> NormalizedEdge {
    NormalizedEdge {
        tx_id: format!("0x{i:x}"),
        log_index: 0,
        src,
        dst,
        timestamp: i as i64,
        value: U256::from(i),
        kind: TxKind::Normal,
        token_contract: None,
    }
}

fn random_edges(seed: u64, n_addr: u64, n_edges: u64) -> Vec<NormalizedEdge> {
    let mut r = rng(seed);
    (0..n_edges)
        .map(|i| {
            let s = Address::synthetic(3, r.random_range(0..n_addr));
            let d = Address::synthetic(3, r.random_range(0..n_addr));
            edge(s, d, i)
        })
        .collect()
}

#[test]
fn hundred_thousand_edges_transpose_and_multiplicity() {
    let edges = random_edges(11, 5_000, 100_000);
    let g = build_graph(&edges);

    let mut expected: BTreeMap<(Address, Address), u64> = BTreeMap::new();
    for e in &edges {
        *expected.entry((e.src, e.dst)).or_default() += 1;
    }
    assert_eq!(g.transaction_count(), 100_000);
    assert_eq!(g.pair_count(), expected.len());

    let mut mult_sum = 0u64;
    let mut fwd = BTreeSet::new();
    for u in 0..g.node_count() as u32 {
        for (v, m) in g.successors_with_multiplicity(u) {
            mult_sum += m;
            let key = (g.address(u), g.address(v));
            assert_eq!(expected[&key], m);
            fwd.insert((u, v));
        }
    }
    assert_eq!(mult_sum, 100_000);

    let mut rev = BTreeSet::new();
    for v in 0..g.node_count() as u32 {
        let preds = g.predecessors(v);
        assert!(preds.windows(2).all(|w| w[0] < w[1]));
        for &u in preds {
            rev.insert((u, v));
        }
    }
    assert_eq!(fwd, rev);
}

#[test]
fn node_ids_are_first_seen_src_before_dst() {
    let edges = random_edges(5, 300, 2_000);
    let g = build_graph(&edges);
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    for e in &edges {
        for a in [e.src, e.dst] {
            if seen.insert(a) {
                order.push(a);
            }
        }
    }
    assert_eq!(g.addresses(), order.as_slice());
}

#[test]
fn degree_matches_set_union_oracle() {
    for seed in 0..20 {
        let edges = random_edges(100 + seed, 50, 400);
        let g = build_graph(&edges);
        for u in 0..g.node_count() as u32 {
            let a = g.address(u);
            let mut nbrs = HashSet::new();
            for e in &edges {
                if e.src == a {
                    nbrs.insert(e.dst);
                }
                if e.dst == a {
                    nbrs.insert(e.src);
                }
            }
            assert_eq!(g.distinct_neighbor_degree(u).unwrap(), nbrs.len());
        }
        let sum: u64 = (0..g.node_count() as u32)
            .map(|u| g.distinct_neighbor_degree(u).unwrap() as u64)
            .sum();
        let avg = g.average_degree(None, None).unwrap();
        assert_eq!(avg.degree_sum, sum);
        assert_eq!(avg.population, g.node_count() as u64);
    }
}

#[test]
fn limits_are_enforced() {
    let edges = random_edges(1, 100, 1_000);
    let err = build_graph_with_limits(
        &edges,
        GraphLimits {
            max_nodes: 10,
            max_edges: usize::MAX,
        },
    )
    .unwrap_err();
    assert!(matches!(err, GraphError::CapacityExceeded { .. }));
}
