//! On-disk dataset cache shared between pipeline stages.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SGCACHE\0" | version u32
//! report_len u64 | report JSON
//! node_count u64 | node_count x 20-byte address   (graph id order)
//! token_count u64 | token_count x 20-byte address
//! edge_count u64 | edge_count x edge
//! edge := src u32 | dst u32 | timestamp i64 | value [u8; 32] big-endian
//!         | kind u8 | token u32 (u32::MAX = none) | log_index u64
//!         | tx_len u32 | tx_id bytes
//! ```

use std::collections::HashMap;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use primitive_types::U256;
use thiserror::Error;

use crate::address::Address;
use crate::graph::{build_graph, SimpleDigraph};
use crate::ingest::{IngestReport, NormalizedEdge, TxKind};

pub const MAGIC: &[u8; 8] = b"SGCACHE\0";
pub const FORMAT_VERSION: u32 = 1;
const NO_TOKEN: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a dataset cache (bad magic)")]
    BadMagic,
    #[error("unsupported cache format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt cache: {0}")]
    Corrupt(String),
}

/// Cleaned edges in chronological order together with the ingest report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CachedDataset {
    pub edges: Vec<NormalizedEdge>,
    pub report: IngestReport,
}

fn kind_code(k: TxKind) -> u8 {
    TxKind::ALL.iter().position(|&x| x == k).unwrap() as u8
}

pub fn save<W: Write>(
    edges: &[NormalizedEdge],
    report: &IngestReport,
    out: W,
) -> Result<(), CacheError> {
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    let report_json = serde_json::to_vec(report).map_err(io::Error::other)?;
    w.write_all(&(report_json.len() as u64).to_le_bytes())?;
    w.write_all(&report_json)?;

    let graph = build_graph(edges);
    w.write_all(&(graph.node_count() as u64).to_le_bytes())?;
    for a in graph.addresses() {
        w.write_all(a.as_bytes())?;
    }
    let mut tokens: Vec<Address> = Vec::new();
    let mut token_ids: HashMap<Address, u32> = HashMap::new();
    for t in edges.iter().filter_map(|e| e.token_contract) {
        token_ids.entry(t).or_insert_with(|| {
            tokens.push(t);
            (tokens.len() - 1) as u32
        });
    }
    w.write_all(&(tokens.len() as u64).to_le_bytes())?;
    for t in &tokens {
        w.write_all(t.as_bytes())?;
    }
    w.write_all(&(edges.len() as u64).to_le_bytes())?;
    for e in edges {
        let src = graph.node_id(&e.src).expect("edge endpoints are nodes");
        let dst = graph.node_id(&e.dst).expect("edge endpoints are nodes");
        w.write_all(&src.to_le_bytes())?;
        w.write_all(&dst.to_le_bytes())?;
        w.write_all(&e.timestamp.to_le_bytes())?;
        w.write_all(&e.value.to_big_endian())?;
        w.write_all(&[kind_code(e.kind)])?;
        let token = e.token_contract.map_or(NO_TOKEN, |t| token_ids[&t]);
        w.write_all(&token.to_le_bytes())?;
        w.write_all(&e.log_index.to_le_bytes())?;
        w.write_all(&(e.tx_id.len() as u32).to_le_bytes())?;
        w.write_all(e.tx_id.as_bytes())?;
    }
    w.flush()?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CacheError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, CacheError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64, CacheError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn vec(&mut self, len: usize) -> Result<Vec<u8>, CacheError> {
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        Ok(buf)
    }

    fn addresses(&mut self) -> Result<Vec<Address>, CacheError> {
        let n = self.u64()? as usize;
        (0..n)
            .map(|_| Ok(Address::from_bytes(self.bytes()?)))
            .collect()
    }
}

pub fn load<R: Read>(input: R) -> Result<CachedDataset, CacheError> {
    let mut r = Reader {
        inner: BufReader::new(input),
    };
    if &r.bytes::<8>()? != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(CacheError::UnsupportedVersion(version));
    }
    let report_len = r.u64()? as usize;
    let report: IngestReport = serde_json::from_slice(&r.vec(report_len)?)
        .map_err(|e| CacheError::Corrupt(format!("report: {e}")))?;
    let nodes = r.addresses()?;
    let tokens = r.addresses()?;
    let edge_count = r.u64()? as usize;
    let node = |id: u32| {
        nodes
            .get(id as usize)
            .copied()
            .ok_or_else(|| CacheError::Corrupt(format!("node id {id} out of range")))
    };
    let mut edges = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let src = node(r.u32()?)?;
        let dst = node(r.u32()?)?;
        let timestamp = i64::from_le_bytes(r.bytes()?);
        let value = U256::from_big_endian(&r.bytes::<32>()?);
        let kind_byte = r.bytes::<1>()?[0];
        let kind = *TxKind::ALL
            .get(kind_byte as usize)
            .ok_or_else(|| CacheError::Corrupt(format!("kind code {kind_byte}")))?;
        let token = r.u32()?;
        let token_contract = if token == NO_TOKEN {
            None
        } else {
            Some(
                *tokens
                    .get(token as usize)
                    .ok_or_else(|| CacheError::Corrupt(format!("token id {token}")))?,
            )
        };
        let log_index = r.u64()?;
        let tx_len = r.u32()? as usize;
        let tx_id = String::from_utf8(r.vec(tx_len)?)
            .map_err(|_| CacheError::Corrupt("tx id is not utf-8".into()))?;
        edges.push(NormalizedEdge {
            tx_id,
            log_index,
            src,
            dst,
            timestamp,
            value,
            kind,
            token_contract,
        });
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(CacheError::Corrupt("trailing bytes".into()));
    }
    let rebuilt = build_graph(&edges);
    if rebuilt.addresses() != nodes.as_slice() {
        return Err(CacheError::Corrupt(
            "node table does not match edges".into(),
        ));
    }
    Ok(CachedDataset { edges, report })
}

pub fn save_file(
    path: &Path,
    edges: &[NormalizedEdge],
    report: &IngestReport,
) -> Result<(), CacheError> {
    save(edges, report, std::fs::File::create(path)?)
}

pub fn load_file(path: &Path) -> Result<CachedDataset, CacheError> {
    load(std::fs::File::open(path)?)
}

/// Load a cache and build its graph.
pub fn load_with_graph(path: &Path) -> Result<(CachedDataset, SimpleDigraph), CacheError> {
    let ds = load_file(path)?;
    let g = build_graph(&ds.edges);
    Ok((ds, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<NormalizedEdge> {
        (0..20u64)
            .map(|i| NormalizedEdge {
                tx_id: format!("0x{i:x}"),
                log_index: i % 3,
                src: Address::synthetic(2, i % 5),
                dst: Address::synthetic(2, (i * 7) % 6),
                timestamp: 1_000 + i as i64,
                value: U256::MAX - U256::from(i),
                kind: TxKind::ALL[(i % 5) as usize],
                token_contract: (i % 2 == 0).then(|| Address::synthetic(8, i % 4)),
            })
            .collect()
    }

    #[test]
    fn round_trip() {
        let report = IngestReport {
            rows_parsed: 21,
            duplicates: 1,
            ..IngestReport::default()
        };
        let mut buf = Vec::new();
        save(&sample(), &report, &mut buf).unwrap();
        let back = load(&buf[..]).unwrap();
        assert_eq!(back.edges, sample());
        assert_eq!(back.report, report);
        assert_eq!(build_graph(&back.edges), build_graph(&sample()));
    }

    #[test]
    fn rejects_bad_headers_and_truncation() {
        let mut buf = Vec::new();
        save(&sample(), &IngestReport::default(), &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(load(&bad[..]), Err(CacheError::BadMagic)));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(matches!(
            load(&bad[..]),
            Err(CacheError::UnsupportedVersion(9))
        ));
        assert!(load(&buf[..buf.len() - 3]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(load(&long[..]), Err(CacheError::Corrupt(_))));
    }

    #[test]
    fn empty_dataset() {
        let mut buf = Vec::new();
        save(&[], &IngestReport::default(), &mut buf).unwrap();
        let back = load(&buf[..]).unwrap();
        assert!(back.edges.is_empty());
    }
}
