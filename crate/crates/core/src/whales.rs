//! Token balance replay and whale detection.
//!
//! Only fungible token transfers of the configured contract participate.
//! Transfers are replayed in (timestamp, tx hash, log index) order; each one
//! debits the sender and credits the receiver. An address is a current whale
//! when its final net balance meets the threshold and a historical whale when
//! its running net balance ever did.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use primitive_types::{U256, U512};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::address::Address;
use crate::bowtie::{BowTiePartition, LabelCounts};
use crate::graph::{AverageDegree, NodeId, SimpleDigraph};
use crate::ingest::{NormalizedEdge, TxKind};

/// 10^22 base units.
pub fn default_threshold() -> U256 {
    U256::exp10(22)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WhaleError {
    #[error("whale threshold must be positive")]
    ZeroThreshold,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhaleConfig {
    pub token_contract: Address,
    pub threshold: U256,
    /// Mint/burn endpoints. Transfers from them only credit the receiver and
    /// transfers to them only debit the sender; they never enter the ledger.
    pub mint_addresses: BTreeSet<Address>,
}

impl WhaleConfig {
    pub fn new(token_contract: Address, threshold: U256) -> Result<Self, WhaleError> {
        if threshold.is_zero() {
            return Err(WhaleError::ZeroThreshold);
        }
        Ok(WhaleConfig {
            token_contract,
            threshold,
            mint_addresses: [Address::ZERO].into(),
        })
    }

    pub fn with_mint_addresses(mut self, addrs: impl IntoIterator<Item = Address>) -> Self {
        self.mint_addresses = addrs.into_iter().collect();
        self
    }

    fn participates(&self, e: &NormalizedEdge) -> bool {
        e.kind == TxKind::Token && e.token_contract == Some(self.token_contract)
    }
}

/// Signed balance in two's complement over 512 bits. Any sum of fewer than
/// 2^255 transfers of 256-bit values is represented exactly.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct NetBalance(U512);

impl NetBalance {
    pub const ZERO: NetBalance = NetBalance(U512::zero());

    pub fn credit(&mut self, v: U256) {
        self.0 = self.0.overflowing_add(U512::from(v)).0;
    }

    pub fn debit(&mut self, v: U256) {
        self.0 = self.0.overflowing_sub(U512::from(v)).0;
    }

    pub fn is_negative(&self) -> bool {
        self.0.bit(511)
    }

    fn magnitude(&self) -> U512 {
        if self.is_negative() {
            (!self.0).overflowing_add(U512::one()).0
        } else {
            self.0
        }
    }

    /// `self >= v` for an unsigned amount.
    pub fn at_least(&self, v: U256) -> bool {
        !self.is_negative() && self.0 >= U512::from(v)
    }

    pub fn from_signed(negative: bool, magnitude: U256) -> NetBalance {
        let mut b = NetBalance::ZERO;
        if negative {
            b.debit(magnitude);
        } else {
            b.credit(magnitude);
        }
        b
    }

    /// Exact sum (wrapping only past 2^511).
    pub fn sum<'a>(items: impl IntoIterator<Item = &'a NetBalance>) -> NetBalance {
        NetBalance(
            items
                .into_iter()
                .fold(U512::zero(), |acc, b| acc.overflowing_add(b.0).0),
        )
    }
}

impl Ord for NetBalance {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_negative(), other.is_negative()) {
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            // Same sign: two's complement order matches unsigned order.
            _ => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for NetBalance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for NetBalance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_negative() {
            write!(f, "-{}", self.magnitude())
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl fmt::Debug for NetBalance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for NetBalance {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AccountBalance {
    pub final_net: NetBalance,
    /// Running maximum, starting from the zero opening balance.
    pub peak_net: NetBalance,
    pub first_activity: i64,
    pub last_activity: i64,
}

impl AccountBalance {
    fn opened_at(ts: i64) -> Self {
        AccountBalance {
            final_net: NetBalance::ZERO,
            peak_net: NetBalance::ZERO,
            first_activity: ts,
            last_activity: ts,
        }
    }

    fn touch(&mut self, ts: i64) {
        self.first_activity = self.first_activity.min(ts);
        self.last_activity = self.last_activity.max(ts);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BalanceLedger {
    pub accounts: BTreeMap<Address, AccountBalance>,
}

impl BalanceLedger {
    pub fn get(&self, addr: &Address) -> Option<&AccountBalance> {
        self.accounts.get(addr)
    }

    pub fn len(&self) -> usize {
        self.accounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.accounts.is_empty()
    }

    pub fn net_sum(&self) -> NetBalance {
        NetBalance::sum(self.accounts.values().map(|a| &a.final_net))
    }
}

pub fn replay_balances(edges: &[NormalizedEdge], cfg: &WhaleConfig) -> BalanceLedger {
    let mut transfers: Vec<&NormalizedEdge> =
        edges.iter().filter(|e| cfg.participates(e)).collect();
    transfers.sort_by(|a, b| a.chrono_key().cmp(&b.chrono_key()));

    let mut accounts: BTreeMap<Address, AccountBalance> = BTreeMap::new();
    for t in transfers {
        let ts = t.timestamp;
        let src_tracked = !cfg.mint_addresses.contains(&t.src);
        let dst_tracked = !cfg.mint_addresses.contains(&t.dst);
        if t.src == t.dst {
            if src_tracked {
                accounts
                    .entry(t.src)
                    .or_insert_with(|| AccountBalance::opened_at(ts))
                    .touch(ts);
            }
            continue;
        }
        if src_tracked {
            let acct = accounts
                .entry(t.src)
                .or_insert_with(|| AccountBalance::opened_at(ts));
            acct.touch(ts);
            acct.final_net.debit(t.value);
        }
        if dst_tracked {
            let acct = accounts
                .entry(t.dst)
                .or_insert_with(|| AccountBalance::opened_at(ts));
            acct.touch(ts);
            acct.final_net.credit(t.value);
            if acct.final_net > acct.peak_net {
                acct.peak_net = acct.final_net;
            }
        }
    }
    BalanceLedger { accounts }
}

pub fn current_whales(ledger: &BalanceLedger, cfg: &WhaleConfig) -> BTreeSet<Address> {
    ledger
        .accounts
        .iter()
        .filter(|(_, a)| a.final_net.at_least(cfg.threshold))
        .map(|(addr, _)| *addr)
        .collect()
}

pub fn historical_whales(ledger: &BalanceLedger, cfg: &WhaleConfig) -> BTreeSet<Address> {
    ledger
        .accounts
        .iter()
        .filter(|(_, a)| a.peak_net.at_least(cfg.threshold))
        .map(|(addr, _)| *addr)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct WhaleCrosstab {
    pub counts: LabelCounts,
    /// Whales with no node in the graph the partition was computed on.
    pub absent_from_graph: usize,
}

pub fn whale_bowtie_crosstab(
    whales: &BTreeSet<Address>,
    partition: &BowTiePartition,
    graph: &SimpleDigraph,
) -> WhaleCrosstab {
    let mut out = WhaleCrosstab::default();
    for addr in whales {
        match graph.node_id(addr) {
            Some(n) => out.counts.0[partition.label(n).index()] += 1,
            None => out.absent_from_graph += 1,
        }
    }
    out
}

/// Distinct-neighbour average degree for the network and for whale
/// populations. `None` marks an empty population.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeComparison {
    pub network: Option<AverageDegree>,
    /// Every node except current and historical whales.
    pub network_excluding_whales: Option<AverageDegree>,
    pub current_whales: Option<AverageDegree>,
    /// Current and past whales together.
    pub historical_whales: Option<AverageDegree>,
}

pub fn degree_comparison(
    graph: &SimpleDigraph,
    current: &BTreeSet<Address>,
    historical: &BTreeSet<Address>,
) -> DegreeComparison {
    let ids = |set: &BTreeSet<Address>| -> HashSet<NodeId> {
        set.iter().filter_map(|a| graph.node_id(a)).collect()
    };
    let cur = ids(current);
    let mut all = ids(historical);
    all.extend(cur.iter().copied());
    DegreeComparison {
        network: graph.average_degree(None, None).ok(),
        network_excluding_whales: graph.average_degree(None, Some(&all)).ok(),
        current_whales: graph.average_degree(Some(&cur), None).ok(),
        historical_whales: graph.average_degree(Some(&all), None).ok(),
    }
}
