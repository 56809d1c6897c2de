//! Transaction export parsing, endpoint normalization and deduplication.
//!
//! Two input layouts are supported, JSON Lines and CSV with a header row.
//! Both use the Etherscan-style field names `hash`, `logIndex`, `from`, `to`,
//! `contractAddress`, `timeStamp`, `value`, `kind` and `tokenContract`.
//! Unknown CSV columns and JSON keys are ignored so raw explorer exports can
//! be fed in directly.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use primitive_types::U256;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::address::Address;

/// Transaction categories as exported by the block explorer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxKind {
    Normal,
    Token,
    Nft,
    MultiToken,
    Internal,
}

impl TxKind {
    pub const ALL: [TxKind; 5] = [
        TxKind::Normal,
        TxKind::Token,
        TxKind::Nft,
        TxKind::MultiToken,
        TxKind::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Normal => "normal",
            TxKind::Token => "token",
            TxKind::Nft => "nft",
            TxKind::MultiToken => "multitoken",
            TxKind::Internal => "internal",
        }
    }

    /// Token, NFT and multi-token transfers carry a token contract.
    pub fn is_token_transfer(self) -> bool {
        matches!(self, TxKind::Token | TxKind::Nft | TxKind::MultiToken)
    }
}

impl fmt::Display for TxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TxKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" | "tx" => Ok(TxKind::Normal),
            "token" | "erc20" => Ok(TxKind::Token),
            "nft" | "erc721" => Ok(TxKind::Nft),
            "multitoken" | "multi_token" | "multi-token" | "erc1155" => Ok(TxKind::MultiToken),
            "internal" => Ok(TxKind::Internal),
            other => Err(format!("unknown transaction kind {other:?}")),
        }
    }
}

/// One raw ledger entry.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransactionRecord {
    pub tx_id: String,
    pub log_index: u64,
    pub sender: Address,
    pub target: Option<Address>,
    pub contract: Option<Address>,
    /// Unix seconds, UTC.
    pub timestamp: i64,
    pub value: U256,
    pub kind: TxKind,
    pub token_contract: Option<Address>,
}

impl TransactionRecord {
    pub fn key(&self) -> (&str, u64, TxKind) {
        (&self.tx_id, self.log_index, self.kind)
    }
}

/// A record reduced to a directed edge between two addresses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NormalizedEdge {
    pub tx_id: String,
    pub log_index: u64,
    pub src: Address,
    pub dst: Address,
    pub timestamp: i64,
    pub value: U256,
    pub kind: TxKind,
    pub token_contract: Option<Address>,
}

impl NormalizedEdge {
    /// Chronological replay order: timestamp, then transaction hash, then log
    /// index. Kind breaks the remaining ties so the order is total.
    pub fn chrono_key(&self) -> (i64, &str, u64, TxKind) {
        (self.timestamp, &self.tx_id, self.log_index, self.kind)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Format {
    JsonLines,
    Csv,
}

impl Format {
    /// Infer the format from a file extension.
    pub fn from_path(path: &Path) -> Result<Format, IngestError> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        match ext.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" | "json" => Ok(Format::JsonLines),
            "csv" => Ok(Format::Csv),
            _ => Err(IngestError::UnknownFormat(path.display().to_string())),
        }
    }
}

impl FromStr for Format {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "jsonlines" | "json-lines" | "ndjson" => Ok(Format::JsonLines),
            "csv" => Ok(Format::Csv),
            other => Err(IngestError::UnknownFormat(other.to_string())),
        }
    }
}

/// Fatal ingestion errors. Per-row problems are reported as [`RowError`].
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown input format {0:?}")]
    UnknownFormat(String),
    #[error("csv header is missing required column {0:?}")]
    MissingColumn(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// A row that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum RowError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: value exceeds 256 bits")]
    ValueOverflow { line: u64 },
}

impl RowError {
    pub fn line(&self) -> u64 {
        match self {
            RowError::MalformedRow { line, .. } | RowError::ValueOverflow { line } => *line,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Kind assumed when a row has no `kind` field, e.g. for single-type
    /// explorer exports. Without it such rows are malformed.
    pub default_kind: Option<TxKind>,
}

#[derive(Debug, Default)]
pub struct ParsedRecords {
    pub records: Vec<TransactionRecord>,
    pub errors: Vec<RowError>,
}

/// Parse a whole stream. Records come back in file order; rejected rows are
/// collected with their line numbers.
pub fn parse_records<R: Read>(
    input: R,
    format: Format,
    opts: ParseOptions,
) -> Result<ParsedRecords, IngestError> {
    let mut out = ParsedRecords::default();
    let mut push = |row: Result<TransactionRecord, RowError>| match row {
        Ok(r) => out.records.push(r),
        Err(e) => out.errors.push(e),
    };
    match format {
        Format::JsonLines => parse_jsonl(input, opts, &mut push)?,
        Format::Csv => parse_csv(input, opts, &mut push)?,
    }
    Ok(out)
}

#[derive(Default)]
struct RawFields<'a> {
    hash: Option<&'a str>,
    log_index: Option<&'a str>,
    from: Option<&'a str>,
    to: Option<&'a str>,
    contract: Option<&'a str>,
    timestamp: Option<&'a str>,
    value: Option<&'a str>,
    kind: Option<&'a str>,
    token_contract: Option<&'a str>,
}

enum FieldError {
    Malformed(String),
    Overflow,
}

fn non_empty(v: Option<&str>) -> Option<&str> {
    v.map(str::trim).filter(|s| !s.is_empty())
}

fn parse_addr(name: &str, v: Option<&str>) -> Result<Option<Address>, FieldError> {
    match non_empty(v) {
        None => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|e| FieldError::Malformed(format!("{name}: {e}"))),
    }
}

fn build_record(raw: RawFields<'_>, opts: ParseOptions) -> Result<TransactionRecord, FieldError> {
    let tx_id = non_empty(raw.hash)
        .ok_or_else(|| FieldError::Malformed("missing hash".into()))?
        .to_string();
    let log_index = match non_empty(raw.log_index) {
        None => 0,
        Some(s) => s
            .parse::<u64>()
            .map_err(|_| FieldError::Malformed(format!("logIndex: not an integer: {s:?}")))?,
    };
    let sender = parse_addr("from", raw.from)?
        .ok_or_else(|| FieldError::Malformed("missing from".into()))?;
    let target = parse_addr("to", raw.to)?;
    let contract = parse_addr("contractAddress", raw.contract)?;
    let ts_str = non_empty(raw.timestamp)
        .ok_or_else(|| FieldError::Malformed("missing timeStamp".into()))?;
    let timestamp = ts_str
        .parse::<i64>()
        .map_err(|_| FieldError::Malformed(format!("timeStamp: not an integer: {ts_str:?}")))?;
    if timestamp <= 0 {
        return Err(FieldError::Malformed(format!(
            "timeStamp must be positive, got {timestamp}"
        )));
    }
    let value = match non_empty(raw.value) {
        None => U256::zero(),
        Some(s) => parse_value(s)?,
    };
    let kind = match non_empty(raw.kind) {
        Some(s) => s.parse::<TxKind>().map_err(FieldError::Malformed)?,
        None => opts
            .default_kind
            .ok_or_else(|| FieldError::Malformed("missing kind".into()))?,
    };
    let mut token_contract = parse_addr("tokenContract", raw.token_contract)?;
    // Explorer token exports put the token in contractAddress.
    if token_contract.is_none() && kind.is_token_transfer() {
        token_contract = contract;
    }
    Ok(TransactionRecord {
        tx_id,
        log_index,
        sender,
        target,
        contract,
        timestamp,
        value,
        kind,
        token_contract,
    })
}

fn parse_value(s: &str) -> Result<U256, FieldError> {
    if !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(FieldError::Malformed(format!(
            "value: not a decimal integer: {s:?}"
        )));
    }
    U256::from_dec_str(s).map_err(|_| FieldError::Overflow)
}

fn row_error(line: u64, e: FieldError) -> RowError {
    match e {
        FieldError::Malformed(reason) => RowError::MalformedRow { line, reason },
        FieldError::Overflow => RowError::ValueOverflow { line },
    }
}

fn json_field(v: &Value) -> Result<Option<String>, String> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(s.clone())),
        Value::Number(n) => Ok(Some(n.to_string())),
        other => Err(format!("unexpected json value {other}")),
    }
}

fn parse_jsonl<R: Read>(
    input: R,
    opts: ParseOptions,
    push: &mut impl FnMut(Result<TransactionRecord, RowError>),
) -> Result<(), IngestError> {
    const KEYS: [&str; 9] = [
        "hash",
        "logIndex",
        "from",
        "to",
        "contractAddress",
        "timeStamp",
        "value",
        "kind",
        "tokenContract",
    ];
    let reader = BufReader::new(input);
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let obj: serde_json::Map<String, Value> = match serde_json::from_str(&line) {
            Ok(o) => o,
            Err(e) => {
                push(Err(RowError::MalformedRow {
                    line: lineno,
                    reason: format!("invalid json object: {e}"),
                }));
                continue;
            }
        };
        let mut vals: [Option<String>; 9] = Default::default();
        let mut bad = None;
        for (slot, key) in vals.iter_mut().zip(KEYS) {
            if let Some(v) = obj.get(key) {
                match json_field(v) {
                    Ok(s) => *slot = s,
                    Err(reason) => {
                        bad = Some(format!("{key}: {reason}"));
                        break;
                    }
                }
            }
        }
        if let Some(reason) = bad {
            push(Err(RowError::MalformedRow {
                line: lineno,
                reason,
            }));
            continue;
        }
        let raw = RawFields {
            hash: vals[0].as_deref(),
            log_index: vals[1].as_deref(),
            from: vals[2].as_deref(),
            to: vals[3].as_deref(),
            contract: vals[4].as_deref(),
            timestamp: vals[5].as_deref(),
            value: vals[6].as_deref(),
            kind: vals[7].as_deref(),
            token_contract: vals[8].as_deref(),
        };
        push(build_record(raw, opts).map_err(|e| row_error(lineno, e)));
    }
    Ok(())
}

fn parse_csv<R: Read>(
    input: R,
    opts: ParseOptions,
    push: &mut impl FnMut(Result<TransactionRecord, RowError>),
) -> Result<(), IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let headers = rdr.byte_headers()?.clone();
    // An empty stream has no header and no rows.
    if headers.is_empty() {
        return Ok(());
    }
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| std::str::from_utf8(h).map(str::trim) == Ok(name))
    };
    let idx_hash = col("hash").ok_or(IngestError::MissingColumn("hash"))?;
    let idx_from = col("from").ok_or(IngestError::MissingColumn("from"))?;
    let idx_ts = col("timeStamp").ok_or(IngestError::MissingColumn("timeStamp"))?;
    let idx_log = col("logIndex");
    let idx_to = col("to");
    let idx_contract = col("contractAddress");
    let idx_value = col("value");
    let idx_kind = col("kind");
    let idx_token = col("tokenContract");

    let mut record = csv::ByteRecord::new();
    loop {
        let more = match rdr.read_byte_record(&mut record) {
            Ok(more) => more,
            Err(e) => match e.kind() {
                csv::ErrorKind::Io(_) => return Err(e.into()),
                _ => {
                    let line = e.position().map(|p| p.line()).unwrap_or(0);
                    push(Err(RowError::MalformedRow {
                        line,
                        reason: e.to_string(),
                    }));
                    continue;
                }
            },
        };
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut utf8_err = false;
        let mut get = |idx: Option<usize>| -> Option<&str> {
            let bytes = record.get(idx?)?;
            match std::str::from_utf8(bytes) {
                Ok(s) => Some(s),
                Err(_) => {
                    utf8_err = true;
                    None
                }
            }
        };
        let raw = RawFields {
            hash: get(Some(idx_hash)),
            log_index: get(idx_log),
            from: get(Some(idx_from)),
            to: get(idx_to),
            contract: get(idx_contract),
            timestamp: get(Some(idx_ts)),
            value: get(idx_value),
            kind: get(idx_kind),
            token_contract: get(idx_token),
        };
        if utf8_err {
            push(Err(RowError::MalformedRow {
                line,
                reason: "field is not valid utf-8".into(),
            }));
            continue;
        }
        push(build_record(raw, opts).map_err(|e| row_error(line, e)));
    }
    Ok(())
}

/// Both `target` and `contract` were absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("record has neither a target nor a contract address")]
pub struct NoDestination;

/// Reduce a record to an edge. The destination is `target` when present and
/// falls back to `contract` only when `target` is empty.
pub fn normalize(record: &TransactionRecord) -> Result<NormalizedEdge, NoDestination> {
    let dst = record.target.or(record.contract).ok_or(NoDestination)?;
    Ok(NormalizedEdge {
        tx_id: record.tx_id.clone(),
        log_index: record.log_index,
        src: record.sender,
        dst,
        timestamp: record.timestamp,
        value: record.value,
        kind: record.kind,
        token_contract: record.token_contract,
    })
}

#[derive(Debug, Default)]
pub struct Deduped {
    pub records: Vec<TransactionRecord>,
    pub duplicates: usize,
}

/// Keep the first occurrence of each `(tx_id, log_index, kind)` key.
pub fn dedupe(records: Vec<TransactionRecord>) -> Deduped {
    let keep: Vec<bool> = {
        let mut seen: HashSet<(&str, u64, TxKind)> = HashSet::with_capacity(records.len());
        records.iter().map(|r| seen.insert(r.key())).collect()
    };
    let total = records.len();
    let records: Vec<TransactionRecord> = records
        .into_iter()
        .zip(keep)
        .filter_map(|(r, k)| k.then_some(r))
        .collect();
    Deduped {
        duplicates: total - records.len(),
        records,
    }
}

/// Counters describing one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows_parsed: usize,
    pub malformed_rows: usize,
    pub duplicates: usize,
    pub no_destination: usize,
    pub edges: usize,
    pub records_by_kind: BTreeMap<String, usize>,
}

/// A cleaned dataset: normalized edges in chronological order.
#[derive(Debug, Default)]
pub struct Dataset {
    pub edges: Vec<NormalizedEdge>,
    pub report: IngestReport,
    pub errors: Vec<RowError>,
}

/// Dedupe, normalize and sort already-parsed records into a dataset.
///
/// Edges are returned sorted by [`NormalizedEdge::chrono_key`], so the result
/// does not depend on the order in which export files were read.
pub fn clean(records: Vec<TransactionRecord>, errors: Vec<RowError>) -> Dataset {
    let rows_parsed = records.len();
    let deduped = dedupe(records);
    let mut records_by_kind: BTreeMap<String, usize> = TxKind::ALL
        .iter()
        .map(|k| (k.as_str().to_string(), 0))
        .collect();
    let mut no_destination = 0;
    let mut edges = Vec::with_capacity(deduped.records.len());
    for r in &deduped.records {
        *records_by_kind
            .entry(r.kind.as_str().to_string())
            .or_default() += 1;
        match normalize(r) {
            Ok(e) => edges.push(e),
            Err(NoDestination) => no_destination += 1,
        }
    }
    drop(deduped.records);
    edges.sort_by(|a, b| a.chrono_key().cmp(&b.chrono_key()));
    Dataset {
        report: IngestReport {
            rows_parsed,
            malformed_rows: errors.len(),
            duplicates: deduped.duplicates,
            no_destination,
            edges: edges.len(),
            records_by_kind,
        },
        edges,
        errors,
    }
}

/// Parse every file (format inferred from the extension unless given) and
/// clean the union. Row errors carry the file they came from in their reason.
pub fn load_files<P: AsRef<Path>>(
    paths: &[P],
    format: Option<Format>,
    opts: ParseOptions,
) -> Result<Dataset, IngestError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let fmt = match format {
            Some(f) => f,
            None => Format::from_path(path)?,
        };
        let file = std::fs::File::open(path)?;
        let parsed = parse_records(file, fmt, opts)?;
        records.extend(parsed.records);
        errors.extend(parsed.errors.into_iter().map(|e| tag_file(e, path)));
    }
    Ok(clean(records, errors))
}

fn tag_file(e: RowError, path: &Path) -> RowError {
    let line = e.line();
    let reason = match e {
        RowError::MalformedRow { reason, .. } => reason,
        RowError::ValueOverflow { .. } => "value exceeds 256 bits".to_string(),
    };
    RowError::MalformedRow {
        line,
        reason: format!("{}: {reason}", path.display()),
    }
}
