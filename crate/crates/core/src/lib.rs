//! Directed-network analytics over blockchain transaction exports.
//!
//! The pipeline runs in stages: [`ingest`] parses and cleans explorer
//! exports into chronologically ordered edges, [`graph`] interns them into an
//! immutable digraph, [`bowtie`] decomposes it, [`temporal`] tracks category
//! membership across cumulative snapshots, [`whales`] replays token balances
//! and [`events`] builds daily activity windows around event dates.
//! [`fixtures`] generates deterministic synthetic inputs for all of them.

pub mod address;
pub mod bowtie;
pub mod cache;
pub mod events;
pub mod fixtures;
pub mod graph;
pub mod ingest;
pub mod report;
pub mod temporal;
pub mod whales;

pub use address::Address;
pub use bowtie::{classify, classify_bruteforce, BowTieLabel, BowTiePartition};
pub use graph::{build_graph, NodeId, SimpleDigraph};
pub use ingest::{NormalizedEdge, TransactionRecord, TxKind};
pub use primitive_types::U256;
