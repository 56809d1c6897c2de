use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use sandgraph::report::{CORE_SELECTION_RULE, SCHEMA_VERSION};
use sandgraph::temporal::SECONDS_PER_DAY;
use serde::Serialize;

use crate::{CliError, Context, RunConfig};

/// An output directory that remembers which files it has written.
pub(crate) struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).data(&root.display().to_string())?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn file(&mut self, rel: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).data(&parent.display().to_string())?;
        }
        let f = File::create(&path).data(&path.display().to_string())?;
        self.record(rel);
        Ok(BufWriter::new(f))
    }

    pub fn record(&mut self, rel: &str) {
        if !self.written.iter().any(|w| w == rel) {
            self.written.push(rel.to_string());
        }
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.file(rel)?;
        serde_json::to_writer_pretty(&mut w, value).data(rel)?;
        w.write_all(b"\n").data(rel)?;
        w.flush().data(rel)
    }

    /// Files written since the last call, sorted.
    pub fn take_written(&mut self) -> Vec<String> {
        let mut v = std::mem::take(&mut self.written);
        v.sort();
        v
    }
}

#[derive(Serialize)]
pub(crate) struct DesignDecisions {
    pub core_selection: &'static str,
    pub edge_order: &'static str,
    pub node_ids: &'static str,
    pub multiplicity: &'static str,
    pub snapshot_cuts: String,
    pub flow_categories: &'static str,
    pub whale_balance: &'static str,
    pub whale_threshold: String,
    pub whale_threshold_rule: &'static str,
    pub mint_addresses: Vec<String>,
    pub self_transfers: &'static str,
    pub degree: &'static str,
    pub whales_excluded_from_network: &'static str,
    pub event_window_days: i64,
    pub event_day_boundary: &'static str,
    pub event_partition: String,
    pub attribution: String,
    pub event_whales: &'static str,
}

impl DesignDecisions {
    pub fn new(cfg: &RunConfig) -> Self {
        DesignDecisions {
            core_selection: CORE_SELECTION_RULE,
            edge_order: "timestamp, tx_id, log_index, kind",
            node_ids: "first appearance in edge order, source before destination",
            multiplicity: "ignored by classification; kept as per-pair counts",
            snapshot_cuts: format!(
                "event date midnight UTC + {} days ({} s); edges with timestamp <= cut",
                cfg.offset_days,
                cfg.offset_days * SECONDS_PER_DAY
            ),
            flow_categories: "seven labels plus FUTURE for addresses not yet present",
            whale_balance:
                "net balance replay; historical uses the running peak from a zero opening balance",
            whale_threshold: cfg.threshold.to_string(),
            whale_threshold_rule: "at least (>=)",
            mint_addresses: vec![sandgraph::Address::ZERO.to_string()],
            self_transfers: "update activity only; net unchanged",
            degree: "distinct counterparties over in and out edges; a self loop counts once",
            whales_excluded_from_network: "current and historical whales",
            event_window_days: sandgraph::events::WINDOW_HALF_WIDTH,
            event_day_boundary: "UTC midnight",
            event_partition: match cfg.event_partition {
                crate::EventPartition::Full => "full-graph partition".into(),
                crate::EventPartition::Snapshot => format!(
                    "cumulative snapshot at event date midnight UTC + {} days",
                    cfg.offset_days
                ),
            },
            attribution: cfg.attribution.to_string(),
            event_whales: "current whales",
        }
    }
}

#[derive(Serialize)]
pub(crate) struct Metadata<'a> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config_hash: &'a str,
    pub input_digest: &'a str,
    pub design_decisions: DesignDecisions,
    pub outputs: Vec<String>,
}

/// Write `<command>.meta.json` listing every file the command produced.
pub(crate) fn write_metadata(
    out: &mut OutDir,
    cfg: &RunConfig,
    command: &str,
    config_hash: &str,
    input_digest: &str,
) -> Result<Vec<PathBuf>, CliError> {
    let outputs = out.take_written();
    let meta = Metadata {
        schema_version: SCHEMA_VERSION,
        tool: "sandgraph",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash,
        input_digest,
        design_decisions: DesignDecisions::new(cfg),
        outputs: outputs.clone(),
    };
    let name = format!("{command}.meta.json");
    out.json(&name, &meta)?;
    out.take_written();
    let mut paths: Vec<PathBuf> = outputs.iter().map(|o| out.root().join(o)).collect();
    paths.push(out.root().join(name));
    Ok(paths)
}
