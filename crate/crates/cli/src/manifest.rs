//! `manifest.json`: configuration snapshot and per-stage row accounting.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "run_timings.json";

/// Pipeline stages in execution order.
pub const STAGE_ORDER: [&str; 10] = [
    "ingest",
    "filter",
    "train",
    "classify",
    "sentiment",
    "aggregate",
    "stats",
    "lsva",
    "pls",
    "report",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    /// Unit of `rows_in` / `rows_out` (e.g. `reviews`).
    pub unit: String,
    pub rows_in: usize,
    pub rows_out: usize,
    /// Rows removed, by reason. `rows_out = rows_in - sum(drops)`.
    pub drops: BTreeMap<String, usize>,
    /// Other counts worth reporting (e.g. retained POIs).
    pub counts: BTreeMap<String, usize>,
    /// Choices that shaped the output (e.g. the sentiment mode).
    pub settings: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl StageRecord {
    pub fn new(name: &str, unit: &str) -> Self {
        StageRecord {
            name: name.to_string(),
            status: StageStatus::Ok,
            unit: unit.to_string(),
            rows_in: 0,
            rows_out: 0,
            drops: BTreeMap::new(),
            counts: BTreeMap::new(),
            settings: BTreeMap::new(),
            warnings: Vec::new(),
            outputs: Vec::new(),
            error: None,
        }
    }

    pub fn failed(name: &str, error: String) -> Self {
        StageRecord {
            status: StageStatus::Failed,
            error: Some(error),
            ..StageRecord::new(name, "")
        }
    }

    pub fn drop(&mut self, reason: &str, n: usize) {
        if n > 0 {
            *self.drops.entry(reason.to_string()).or_insert(0) += n;
        }
    }

    pub fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n);
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.insert(key.to_string(), value.to_string());
    }

    pub fn output(&mut self, file: &str) {
        if !self.outputs.iter().any(|f| f == file) {
            self.outputs.push(file.to_string());
        }
    }

    /// True when `rows_out` equals `rows_in` minus the reported drops.
    pub fn is_conserved(&self) -> bool {
        self.rows_in.checked_sub(self.drops.values().sum()) == Some(self.rows_out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(seed: u64, config: Option<RunConfig>) -> Self {
        RunManifest {
            tool: "densitylens".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            stages: Vec::new(),
        }
    }

    /// Existing manifest in `dir`, or a fresh one.
    pub fn load_or_new(dir: &Path, seed: u64, config: Option<RunConfig>) -> Self {
        let existing = fs::read_to_string(dir.join(MANIFEST_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok());
        match existing {
            Some(mut m) if m.seed == seed => {
                if config.is_some() {
                    m.config = config;
                }
                m
            }
            _ => RunManifest::new(seed, config),
        }
    }

    /// Insert or replace the record for its stage, keeping pipeline order.
    pub fn record(&mut self, rec: StageRecord) {
        self.stages.retain(|s| s.name != rec.name);
        self.stages.push(rec);
        let rank = |n: &str| {
            STAGE_ORDER
                .iter()
                .position(|s| *s == n)
                .unwrap_or(STAGE_ORDER.len())
        };
        self.stages.sort_by_key(|s| rank(&s.name));
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(dir.join(MANIFEST_FILE), text)
    }
}
