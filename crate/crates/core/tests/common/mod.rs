//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's own algorithms; every answer is
//! recomputed from first principles so a shared bug cannot hide.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sandgraph::fixtures::PlantedBowTieSpec;
use sandgraph::ingest::{NormalizedEdge, TxKind};
use sandgraph::whales::NetBalance;
use sandgraph::{Address, BowTieLabel, U256};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random digraph on `n` nodes where each ordered pair (self loops
/// included) is present with probability `density`. Duplicate edges are
/// added on purpose to exercise multiplicity handling.
pub fn random_pairs(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for s in 0..n as u32 {
        for t in 0..n as u32 {
            if rng.random_bool(density) {
                out.push((s, t));
                if rng.random_bool(0.05) {
                    out.push((s, t));
                }
            }
        }
    }
    out
}

/// Densities from very sparse (expected out-degree below one) to dense.
pub fn density_for(rng: &mut ChaCha8Rng, n: usize) -> f64 {
    let avg_out: f64 = match rng.random_range(0..4u32) {
        0 => rng.random_range(0.2..1.0),
        1 => rng.random_range(1.0..2.0),
        2 => rng.random_range(2.0..5.0),
        _ => rng.random_range(5.0..(n as f64).max(6.0)),
    };
    (avg_out / n as f64).min(1.0)
}

/// Bitset transitive closure. `reach[u]` has bit `v` set when a path of
/// length ≥ 1 leads from `u` to `v`.
pub struct Closure {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl Closure {
    pub fn new(n: usize, pairs: &[(u32, u32)]) -> Self {
        let words = n.div_ceil(64).max(1);
        let mut bits = vec![0u64; n * words];
        for &(s, t) in pairs {
            bits[s as usize * words + t as usize / 64] |= 1 << (t % 64);
        }
        // Warshall: for each k, every row that reaches k absorbs row k.
        for k in 0..n {
            let row_k: Vec<u64> = bits[k * words..(k + 1) * words].to_vec();
            for i in 0..n {
                if bits[i * words + k / 64] >> (k % 64) & 1 == 1 {
                    for (w, rk) in row_k.iter().enumerate() {
                        bits[i * words + w] |= rk;
                    }
                }
            }
        }
        Closure { n, words, bits }
    }

    pub fn reaches(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    /// Mutual-reachability classes, each sorted, listed by minimum member.
    pub fn scc_classes(&self) -> Vec<Vec<u32>> {
        let mut assigned = vec![false; self.n];
        let mut out = Vec::new();
        for u in 0..self.n {
            if assigned[u] {
                continue;
            }
            let mut class = vec![u as u32];
            assigned[u] = true;
            for v in u + 1..self.n {
                if !assigned[v] && self.reaches(u, v) && self.reaches(v, u) {
                    assigned[v] = true;
                    class.push(v as u32);
                }
            }
            out.push(class);
        }
        out
    }

    /// Bow-tie labels straight from the closure and the category
    /// definitions.
    pub fn bowtie_labels(&self) -> Vec<BowTieLabel> {
        let classes = self.scc_classes();
        // Largest class; classes are in min-id order so the first maximum
        // wins ties.
        let mut core = &classes[0];
        for c in &classes {
            if c.len() > core.len() {
                core = c;
            }
        }
        let c = core[0] as usize;
        let in_core: HashSet<usize> = core.iter().map(|&x| x as usize).collect();
        let mut labels = vec![BowTieLabel::Other; self.n];
        let mut ins = Vec::new();
        let mut outs = Vec::new();
        for v in 0..self.n {
            if in_core.contains(&v) {
                labels[v] = BowTieLabel::Scc;
                continue;
            }
            let fwd = self.reaches(c, v);
            let back = self.reaches(v, c);
            assert!(!(fwd && back), "closure oracle: core is not maximal");
            if back {
                labels[v] = BowTieLabel::In;
                ins.push(v);
            } else if fwd {
                labels[v] = BowTieLabel::Out;
                outs.push(v);
            }
        }
        for v in 0..self.n {
            if labels[v] != BowTieLabel::Other {
                continue;
            }
            let from_in = ins.iter().any(|&i| self.reaches(i, v));
            let to_out = outs.iter().any(|&o| self.reaches(v, o));
            labels[v] = match (from_in, to_out) {
                (true, true) => BowTieLabel::Tubes,
                (true, false) => BowTieLabel::TendrilsIn,
                (false, true) => BowTieLabel::TendrilsOut,
                (false, false) => BowTieLabel::Other,
            };
        }
        labels
    }
}

/// Matches `^0x[0-9a-f]{40}$`.
pub fn is_canonical_address(s: &str) -> bool {
    s.len() == 42
        && s.starts_with("0x")
        && s[2..]
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

/// A feasible planted spec. TUBES is empty in most draws, either by choice
/// or because IN or OUT is empty.
pub fn random_planted_spec(seed: u64) -> PlantedBowTieSpec {
    let mut r = rng(seed);
    let size = |max: usize, r: &mut rand_chacha::ChaCha8Rng| {
        if r.random_bool(0.25) {
            0
        } else {
            r.random_range(1..=max)
        }
    };
    let scc = r.random_range(1..=40);
    let in_ = size(20, &mut r);
    let out = size(20, &mut r);
    let tubes = if in_ > 0 && out > 0 && !r.random_bool(0.33) {
        size(8, &mut r)
    } else {
        0
    };
    let tendrils_in = if in_ > 0 { size(8, &mut r) } else { 0 };
    let tendrils_out = if out > 0 { size(8, &mut r) } else { 0 };
    let other = size(6, &mut r);
    let rate = r.random_range(0.0..=1.0);
    PlantedBowTieSpec::from_sizes(
        [scc, in_, out, tubes, tendrils_in, tendrils_out, other],
        seed,
        rate,
    )
}

pub const TOKEN: Address = Address::from_bytes([0xAA; 20]);
pub const OTHER_TOKEN: Address = Address::from_bytes([0xBB; 20]);

pub fn user(i: u64) -> Address {
    Address::synthetic(4, i)
}

/// A stream of mostly matching token transfers mixed with mints, burns,
/// self transfers, another token and non-token records. Timestamps collide
/// often so tie-breaking matters.
pub fn transfer_stream(seed: u64, n: usize, max_value: u128) -> Vec<NormalizedEdge> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let pick = |r: &mut rand_chacha::ChaCha8Rng| match r.random_range(0..40u32) {
                0 => Address::ZERO,
                k if k < 3 => user(0),
                _ => user(r.random_range(1..200)),
            };
            let src = pick(&mut r);
            let dst = if r.random_bool(0.02) {
                src
            } else {
                pick(&mut r)
            };
            let (kind, token) = match r.random_range(0..20u32) {
                0 => (TxKind::Normal, None),
                1 => (TxKind::Token, Some(OTHER_TOKEN)),
                2 => (TxKind::Nft, Some(TOKEN)),
                _ => (TxKind::Token, Some(TOKEN)),
            };
            NormalizedEdge {
                // The index suffix keeps (tx_id, log_index, kind) unique.
                tx_id: format!("0x{:x}{i:06}", r.random_range(0..n as u64 * 4)),
                log_index: r.random_range(0..3),
                src,
                dst,
                timestamp: 1_600_000_000 + r.random_range(0..(n as i64 / 2).max(1)),
                value: U256::from(r.random_range(0..=max_value)),
                kind,
                token_contract: token,
            }
        })
        .collect()
}

#[derive(Debug, PartialEq, Eq)]
pub struct OracleAccount {
    pub final_net: i128,
    pub peak_net: i128,
    pub first: i64,
    pub last: i64,
}

/// Per-address sort and scan over signed deltas.
pub fn ledger_oracle(
    edges: &[NormalizedEdge],
    mints: &[Address],
) -> BTreeMap<Address, OracleAccount> {
    type Key = (i64, String, u64, TxKind);
    let mut per: BTreeMap<Address, Vec<(Key, i128)>> = BTreeMap::new();
    for e in edges {
        if e.kind != TxKind::Token || e.token_contract != Some(TOKEN) {
            continue;
        }
        let key: Key = (e.timestamp, e.tx_id.clone(), e.log_index, e.kind);
        let v = e.value.as_u128() as i128;
        let delta_src = if e.src == e.dst { 0 } else { -v };
        let delta_dst = if e.src == e.dst { 0 } else { v };
        if !mints.contains(&e.src) {
            per.entry(e.src).or_default().push((key.clone(), delta_src));
        }
        if !mints.contains(&e.dst) && e.src != e.dst {
            per.entry(e.dst).or_default().push((key, delta_dst));
        }
    }
    per.into_iter()
        .map(|(addr, mut list)| {
            list.sort();
            let mut bal = 0i128;
            let mut peak = 0i128;
            for (_, d) in &list {
                bal += d;
                peak = peak.max(bal);
            }
            let acct = OracleAccount {
                final_net: bal,
                peak_net: peak,
                first: list.first().unwrap().0 .0,
                last: list.last().unwrap().0 .0,
            };
            (addr, acct)
        })
        .collect()
}

pub fn signed(v: i128) -> NetBalance {
    NetBalance::from_signed(v < 0, U256::from(v.unsigned_abs()))
}
