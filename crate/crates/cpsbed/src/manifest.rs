use std::collections::BTreeMap;

use cpsbed_core::attack::AttackSpec;
use cpsbed_core::dataset::{BalanceStats, SplitBoundary};
use cpsbed_core::engine::Outcome;
use cpsbed_core::net::NodeId;
use cpsbed_core::plant::SystemMode;
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
pub const TRUTH: &str = "truth.csv";
pub const VIEW_FILES: [&str; 3] = ["physical.csv", "capture.jsonl", "host.jsonl"];
pub const VIEWS: [&str; 2] = ["train", "test"];

/// Every file of a dataset directory except the manifest, in checksum order.
pub fn data_files() -> Vec<String> {
    let mut out: Vec<String> = VIEWS
        .iter()
        .flat_map(|v| VIEW_FILES.iter().map(move |f| format!("{}/{}", v, f)))
        .collect();
    out.push(TRUTH.to_string());
    out.sort();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeChange {
    pub t: f64,
    pub mode: SystemMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Balance {
    pub all: BalanceStats,
    pub train: BalanceStats,
    pub test: BalanceStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DedupStats {
    pub eps: f64,
    pub records: usize,
    pub runs: usize,
    pub exceptions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSummary {
    pub cell: String,
    pub hazard_at: Option<f64>,
    pub intervention_at: Option<f64>,
    pub intervention_by: Option<NodeId>,
    pub futile: bool,
    pub reports_dropped: usize,
}

impl From<&Outcome> for OutcomeSummary {
    fn from(o: &Outcome) -> Self {
        Self {
            cell: o.cell().to_string(),
            hazard_at: o.hazard_at,
            intervention_at: o.intervention_at,
            intervention_by: o.intervention_by,
            futile: o.futile,
            reports_dropped: o.reports_dropped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// sha256 of `config`.
    pub config_hash: String,
    pub seed: u64,
    /// The scenario as run, in scenario-file syntax.
    pub config: String,
    pub sample_period: f64,
    pub attacks: Vec<AttackSpec>,
    /// Attack ids that occur in any emitted file.
    pub executed_ids: Vec<u32>,
    pub zero_day_ids: Vec<u32>,
    pub mode_schedule: Vec<ModeChange>,
    pub split: SplitBoundary,
    pub balance: Balance,
    pub dedup: DedupStats,
    pub outcome: OutcomeSummary,
    /// sha256 per data file, keyed by path relative to the dataset root.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
