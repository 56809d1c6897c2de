//! The `sandgraph` command pipeline.
//!
//! Each command reads either raw exports (`--input`) or the binary cache
//! written by `ingest`, and writes its artifacts plus a `<command>.meta.json`
//! block into the output directory. Output bytes depend only on input
//! contents and configuration, never on paths or wall-clock time.

mod commands;
mod generate;
mod output;

use std::fmt::{self, Display};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sandgraph::events::{load_events, Attribution, EventSpec, DEFAULT_EVENTS_CSV};
use sandgraph::graph::{build_graph_with_limits, GraphError, GraphLimits};
use sandgraph::ingest::{
    load_files, Format, IngestError, IngestReport, NormalizedEdge, ParseOptions, RowError, TxKind,
};
use sandgraph::{cache, Address, SimpleDigraph, U256};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use commands::{cmd_all, cmd_bowtie, cmd_events, cmd_ingest, cmd_sankey, cmd_whales};
pub use generate::{cmd_generate, GenerateTarget};

/// Failures, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Capacity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Capacity(_) => 3,
        }
    }
}

pub(crate) trait Context<T> {
    fn data(self, what: &str) -> Result<T, CliError>;
}

impl<T, E: Display> Context<T> for Result<T, E> {
    fn data(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Data(format!("{what}: {e}")))
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::CapacityExceeded { .. } => CliError::Capacity(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::UnknownFormat(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Which bow-tie partition splits event-window transactions into groups.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventPartition {
    /// One partition of the whole graph.
    #[default]
    Full,
    /// Per event, the cumulative snapshot at that event's cut (event date
    /// midnight UTC plus the offset days).
    Snapshot,
}

impl FromStr for EventPartition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(EventPartition::Full),
            "snapshot" => Ok(EventPartition::Snapshot),
            other => Err(format!("unknown event partition {other:?}")),
        }
    }
}

impl fmt::Display for EventPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventPartition::Full => "full",
            EventPartition::Snapshot => "snapshot",
        })
    }
}

/// Settings shared by every pipeline command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    /// Inferred from each file's extension when absent.
    pub format: Option<Format>,
    pub out_dir: PathBuf,
    /// Written by `ingest`; read by the other commands when no inputs are
    /// given. Defaults to `<out_dir>/graph.sgc`.
    pub cache: Option<PathBuf>,
    /// Built-in event list when absent.
    pub events_file: Option<PathBuf>,
    pub threshold: U256,
    /// Inferred as the most-transferred token contract when absent.
    pub token_contract: Option<Address>,
    pub offset_days: i64,
    pub attribution: Attribution,
    pub event_partition: EventPartition,
    pub oracle_bound: usize,
    /// Cross-check the fast classification with the brute-force oracle.
    pub verify: bool,
    /// Fail on malformed rows instead of warning.
    pub strict: bool,
    pub default_kind: Option<TxKind>,
    pub limits: GraphLimits,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            inputs: Vec::new(),
            format: None,
            out_dir: out_dir.into(),
            cache: None,
            events_file: None,
            threshold: sandgraph::whales::default_threshold(),
            token_contract: None,
            offset_days: 10,
            attribution: Attribution::Sender,
            event_partition: EventPartition::Full,
            oracle_bound: sandgraph::bowtie::DEFAULT_ORACLE_BOUND,
            verify: false,
            strict: false,
            default_kind: None,
            limits: GraphLimits::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for p in self.inputs.iter().chain(&self.events_file) {
            if !p.is_file() {
                return Err(CliError::Usage(format!(
                    "{} is not a readable file",
                    p.display()
                )));
            }
        }
        if self.threshold.is_zero() {
            return Err(CliError::Usage("threshold must be positive".into()));
        }
        if self.offset_days < 0 {
            return Err(CliError::Usage("offset days must be non-negative".into()));
        }
        Ok(())
    }

    pub fn cache_path(&self) -> PathBuf {
        self.cache
            .clone()
            .unwrap_or_else(|| self.out_dir.join("graph.sgc"))
    }

    fn format_name(&self) -> Option<&'static str> {
        self.format.map(|f| match f {
            Format::Csv => "csv",
            Format::JsonLines => "jsonl",
        })
    }
}

/// Path-free view of the configuration that feeds the config hash.
#[derive(Serialize)]
struct Fingerprint<'a> {
    format: Option<&'static str>,
    threshold: String,
    token_contract: Option<Address>,
    offset_days: i64,
    attribution: Attribution,
    event_partition: EventPartition,
    oracle_bound: usize,
    verify: bool,
    strict: bool,
    default_kind: Option<&'static str>,
    max_nodes: usize,
    max_edges: usize,
    events_digest: &'a str,
}

pub(crate) fn config_hash(cfg: &RunConfig, events_digest: &str) -> String {
    let fp = Fingerprint {
        format: cfg.format_name(),
        threshold: cfg.threshold.to_string(),
        token_contract: cfg.token_contract,
        offset_days: cfg.offset_days,
        attribution: cfg.attribution,
        event_partition: cfg.event_partition,
        oracle_bound: cfg.oracle_bound,
        verify: cfg.verify,
        strict: cfg.strict,
        default_kind: cfg.default_kind.map(TxKind::as_str),
        max_nodes: cfg.limits.max_nodes,
        max_edges: cfg.limits.max_edges,
        events_digest,
    };
    let json = serde_json::to_vec(&fp).expect("fingerprint serializes");
    hex::encode(Sha256::digest(&json))
}

/// SHA-256 over each file's length and contents, in the given order.
fn digest_files(paths: &[PathBuf]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    for p in paths {
        let mut f = std::fs::File::open(p).data(&p.display().to_string())?;
        let len = f.metadata().data("stat")?.len();
        h.update(len.to_le_bytes());
        loop {
            let n = f.read(&mut buf).data("read")?;
            if n == 0 {
                break;
            }
            h.update(&buf[..n]);
        }
    }
    Ok(hex::encode(h.finalize()))
}

/// Everything a command needs from the input side.
pub struct Loaded {
    pub edges: Vec<NormalizedEdge>,
    pub report: IngestReport,
    pub row_errors: Vec<RowError>,
    pub graph: SimpleDigraph,
    pub input_digest: String,
}

const WARN_ROWS: usize = 10;

pub fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    cfg.validate()?;
    let (edges, report, row_errors, input_digest) = if !cfg.inputs.is_empty() {
        let opts = ParseOptions {
            default_kind: cfg.default_kind,
        };
        let ds = load_files(&cfg.inputs, cfg.format, opts)?;
        (ds.edges, ds.report, ds.errors, digest_files(&cfg.inputs)?)
    } else {
        let path = cfg.cache_path();
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "no --input given and no cache at {}",
                path.display()
            )));
        }
        let ds = cache::load_file(&path).data("cache")?;
        let digest = digest_files(std::slice::from_ref(&path))?;
        (ds.edges, ds.report, Vec::new(), digest)
    };
    if !row_errors.is_empty() {
        if cfg.strict {
            return Err(CliError::Data(format!(
                "{} malformed rows; first: {}",
                row_errors.len(),
                row_errors[0]
            )));
        }
        for e in row_errors.iter().take(WARN_ROWS) {
            eprintln!("warning: skipped {e}");
        }
        if row_errors.len() > WARN_ROWS {
            eprintln!(
                "warning: {} more malformed rows skipped",
                row_errors.len() - WARN_ROWS
            );
        }
    }
    let graph = build_graph_with_limits(&edges, cfg.limits)?;
    Ok(Loaded {
        edges,
        report,
        row_errors,
        graph,
        input_digest,
    })
}

/// Events from the configured file or the built-in list, with the digest
/// of their source text.
pub(crate) fn load_event_list(cfg: &RunConfig) -> Result<(Vec<EventSpec>, String), CliError> {
    let text = match &cfg.events_file {
        Some(p) => std::fs::read_to_string(p).data(&p.display().to_string())?,
        None => DEFAULT_EVENTS_CSV.to_string(),
    };
    let events = load_events(text.as_bytes()).data("events")?;
    if events.is_empty() {
        return Err(CliError::Data("event list is empty".into()));
    }
    Ok((events, hex::encode(Sha256::digest(text.as_bytes()))))
}

/// Parse a positive amount given as decimal digits or `<digits>e<exp>`.
pub fn parse_amount(s: &str) -> Result<U256, String> {
    let s = s.trim();
    let (mantissa, exp) = match s.split_once(['e', 'E']) {
        Some((m, e)) => (m, e.parse::<usize>().map_err(|e| format!("exponent: {e}"))?),
        None => (s, 0),
    };
    if mantissa.is_empty() || !mantissa.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("{s:?} is not a non-negative integer amount"));
    }
    let m = U256::from_dec_str(mantissa).map_err(|_| format!("{s:?} exceeds 256 bits"))?;
    let scale = U256::from(10u8)
        .checked_pow(U256::from(exp))
        .ok_or_else(|| format!("{s:?} exceeds 256 bits"))?;
    let v = m
        .checked_mul(scale)
        .ok_or_else(|| format!("{s:?} exceeds 256 bits"))?;
    if v.is_zero() {
        return Err("amount must be positive".into());
    }
    Ok(v)
}

pub(crate) fn relative_to(root: &Path, p: &Path) -> Option<String> {
    p.strip_prefix(root)
        .ok()
        .map(|r| r.to_string_lossy().replace('\\', "/"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn amounts() {
        assert_eq!(parse_amount("1e22").unwrap(), U256::exp10(22));
        assert_eq!(
            parse_amount("10000000000000000000000").unwrap(),
            U256::exp10(22)
        );
        assert_eq!(parse_amount("25e2").unwrap(), U256::from(2500));
        assert!(parse_amount("0").is_err());
        assert!(parse_amount("-5").is_err());
        assert!(parse_amount("1e80").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage(String::new()).exit_code(), 1);
        assert_eq!(CliError::Data(String::new()).exit_code(), 2);
        assert_eq!(CliError::Capacity(String::new()).exit_code(), 3);
    }

    #[test]
    fn config_hash_ignores_paths() {
        let a = RunConfig::new("/tmp/a");
        let mut b = RunConfig::new("/elsewhere");
        b.cache = Some("/x/y.sgc".into());
        assert_eq!(config_hash(&a, "d"), config_hash(&b, "d"));
        b.offset_days = 3;
        assert_ne!(config_hash(&a, "d"), config_hash(&b, "d"));
        let mut c = RunConfig::new("/tmp/a");
        c.event_partition = EventPartition::Snapshot;
        assert_ne!(config_hash(&a, "d"), config_hash(&c, "d"));
    }
}
