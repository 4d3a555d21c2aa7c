//! Resolved run configurations and the manifest written next to outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use theatre::reactive::{RebuildOrder, UpdateStrategy};
use theatre::tuner::TunerConfig;

use crate::error::{input, read_file};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub params: Option<PathBuf>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub instance: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub policy: Option<PathBuf>,
    /// Fill cells missing from the policy file with the do-nothing prior.
    pub fill_prior: bool,
    pub strategies: Vec<UpdateStrategy>,
    pub replications: u64,
    pub seed: u64,
    pub timing: bool,
    /// Write the event trace and Gantt charts of the first replication.
    pub traces: bool,
    pub verify: bool,
    pub rebuild_order: RebuildOrder,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            instance: None,
            params: None,
            policy: None,
            fill_prior: false,
            strategies: UpdateStrategy::ALL.to_vec(),
            replications: 100,
            seed: 0,
            timing: false,
            traces: true,
            verify: false,
            rebuild_order: RebuildOrder::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneConfig {
    pub instance: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub tuner: TunerConfig,
    pub rebuild_order: RebuildOrder,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub instance: Option<PathBuf>,
    pub day: u32,
}

/// Everything needed to re-run a command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum Resolved {
    Generate(GenerateConfig),
    Simulate(SimulateConfig),
    Tune(TuneConfig),
    ExportMip(ExportConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(flatten)]
    pub run: Resolved,
    /// Files written next to the manifest, in write order.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(run: Resolved, outputs: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            run,
            outputs,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = read_file(path)?;
        serde_json::from_str(&text).map_err(|e| input(format!("{}: not a run manifest: {e}", path.display())))
    }
}

/// Loads a JSON config file into `T`, or returns the default.
pub fn load_base<T: Default + serde::de::DeserializeOwned>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = read_file(p)?;
            serde_json::from_str(&text).map_err(|e| input(format!("{}: invalid config: {e}", p.display())))
        }
    }
}
