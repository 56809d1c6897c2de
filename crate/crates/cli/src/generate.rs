use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sandgraph::fixtures::{
    gen_activity_stream, gen_bowtie_graph, ActivityStreamSpec, PlantedBowTieSpec,
};
use sandgraph::ingest::{Format, TransactionRecord};
use sandgraph::report::{write_records, SCHEMA_VERSION};
use sandgraph::{build_graph, Address, BowTieLabel};
use serde::Serialize;

use crate::{CliError, Context};

/// What `generate` produces.
#[derive(Debug, Clone)]
pub enum GenerateTarget {
    Activity(ActivityStreamSpec),
    BowTie(PlantedBowTieSpec),
}

#[derive(Serialize)]
struct ActivityTruth<'a> {
    schema_version: u32,
    spec: &'a ActivityStreamSpec,
    records: usize,
    records_by_kind: BTreeMap<&'static str, usize>,
    contract_fallbacks: usize,
    token_contract: Address,
    game_contract: Address,
    nft_contract: Address,
    whales: Vec<Address>,
}

#[derive(Serialize)]
struct BowTieTruth<'a> {
    schema_version: u32,
    spec: &'a PlantedBowTieSpec,
    sizes: BTreeMap<&'static str, usize>,
    labels: BTreeMap<Address, BowTieLabel>,
}

/// `<stem>.truth.json` next to the data file.
fn truth_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fixture".into());
    out.with_file_name(format!("{stem}.truth.json"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).data("truth")?;
    text.push('\n');
    std::fs::write(path, text).data(&path.display().to_string())
}

/// Write a synthetic dataset in the ingest input format plus a ground-truth
/// JSON file describing what the generator planted.
pub fn cmd_generate(
    target: &GenerateTarget,
    out: &Path,
    format: Option<Format>,
) -> Result<Vec<PathBuf>, CliError> {
    let format = match format {
        Some(f) => f,
        None => Format::from_path(out)?,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).data(&parent.display().to_string())?;
    }
    let truth = truth_path(out);
    match target {
        GenerateTarget::Activity(spec) => {
            let stream = gen_activity_stream(spec);
            let f = std::fs::File::create(out).data(&out.display().to_string())?;
            write_records(&stream.records, format, f).data("records")?;
            write_json(
                &truth,
                &ActivityTruth {
                    schema_version: SCHEMA_VERSION,
                    spec,
                    records: stream.records.len(),
                    records_by_kind: stream
                        .records_by_kind
                        .iter()
                        .map(|(k, v)| (k.as_str(), *v))
                        .collect(),
                    contract_fallbacks: stream.contract_fallbacks,
                    token_contract: stream.token_contract,
                    game_contract: stream.game_contract,
                    nft_contract: stream.nft_contract,
                    whales: stream.whales.iter().copied().collect(),
                },
            )?;
        }
        GenerateTarget::BowTie(spec) => {
            let planted = gen_bowtie_graph(spec).map_err(|e| CliError::Usage(e.to_string()))?;
            let records: Vec<TransactionRecord> = planted
                .edges
                .iter()
                .map(|e| TransactionRecord {
                    tx_id: e.tx_id.clone(),
                    log_index: e.log_index,
                    sender: e.src,
                    target: Some(e.dst),
                    contract: None,
                    timestamp: e.timestamp,
                    value: e.value,
                    kind: e.kind,
                    token_contract: e.token_contract,
                })
                .collect();
            let f = std::fs::File::create(out).data(&out.display().to_string())?;
            write_records(&records, format, f).data("records")?;
            let g = build_graph(&planted.edges);
            write_json(
                &truth,
                &BowTieTruth {
                    schema_version: SCHEMA_VERSION,
                    spec,
                    sizes: BowTieLabel::ALL
                        .iter()
                        .map(|l| (l.as_str(), planted.expected.sizes.get(*l)))
                        .collect(),
                    labels: g
                        .addresses()
                        .iter()
                        .copied()
                        .zip(planted.expected.labels.iter().copied())
                        .collect(),
                },
            )?;
        }
    }
    Ok(vec![out.to_path_buf(), truth])
}
