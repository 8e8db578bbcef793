use std::collections::BTreeMap;
use std::path::Path;

use aimdgrid_core::{ControllerKind, ScoreReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::formats::{read_json, MANIFEST_FILE};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// Household load only, kept for training.
    Baseline,
    Controller,
}

/// Provenance record written next to every simulation output. Contains no
/// wall-clock data so that repeated runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub kind: RunKind,
    pub controller: Option<ControllerKind>,
    pub config_hash: String,
    pub scenario_hash: String,
    pub network_hash: String,
    pub thresholds_hash: Option<String>,
    pub dt_s: u32,
    pub horizon_s: u32,
    pub record_every_s: u32,
    pub comm_events: u64,
    pub max_pf_iterations: u32,
    /// Role to file name, relative to the manifest.
    pub outputs: BTreeMap<String, String>,
    /// Role to SHA-256 of the file contents.
    pub output_hashes: BTreeMap<String, String>,
    pub scores: Option<ScoreReport>,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST_FILE))
    }

    pub fn output(&self, dir: &Path, role: &str) -> Result<std::path::PathBuf> {
        self.outputs
            .get(role)
            .map(|f| dir.join(f))
            .ok_or_else(|| CliError::parse(dir.join(MANIFEST_FILE), format!("no `{role}` output listed")))
    }
}
