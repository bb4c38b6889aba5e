//! Per-command JSON configs. Unknown keys are rejected and errors name the
//! offending key path.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tsp_core::harness::{BaselineConfig, SplitSpec};
use tsp_core::net::TrainConfig;
use tsp_core::photon_sim::DatasetConfig;

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenScenesConfig {
    pub dataset: DatasetConfig,
    pub variants_per_class: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub dataset: DatasetConfig,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub master_seed: u64,
    pub dataset: PathBuf,
    #[serde(default)]
    pub split: SplitSpec,
    /// Train on these classes only; all classes when absent.
    #[serde(default)]
    pub classes: Option<Vec<u32>>,
    #[serde(default)]
    pub model: TrainConfig,
    /// Also train the direct classifier when present.
    #[serde(default)]
    pub baseline: Option<BaselineConfig>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkbBuildConfig {
    pub dataset: PathBuf,
    pub split: PathBuf,
    pub model: PathBuf,
    #[serde(default)]
    pub classes: Option<Vec<u32>>,
    #[serde(default)]
    pub snr_db: Option<f32>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalClosedConfig {
    pub dataset: PathBuf,
    pub split: PathBuf,
    pub model: PathBuf,
    pub skb: PathBuf,
    #[serde(default)]
    pub baseline: Option<PathBuf>,
    pub out_dir: PathBuf,
}

fn default_acceptance() -> f64 {
    0.95
}

fn default_maturity() -> usize {
    20
}

fn default_radius() -> f64 {
    0.15
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOpenConfig {
    pub master_seed: u64,
    pub dataset: PathBuf,
    pub split: PathBuf,
    pub model: PathBuf,
    pub known: Vec<u32>,
    /// Held-out classes; the SNR sweep uses the first, the count sweep
    /// takes growing prefixes.
    pub unknown: Vec<u32>,
    #[serde(default = "default_acceptance")]
    pub target_acceptance: f64,
    #[serde(default = "default_maturity")]
    pub maturity: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotTable {
    pub csv: PathBuf,
    pub x_label: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    pub tables: Vec<PlotTable>,
    pub out_dir: PathBuf,
}

/// Sections whose seeds are derived from `master_seed` and so may not set one.
const SEEDLESS_SECTIONS: [&str; 3] = ["split", "model", "baseline"];

/// Parses a config file, returning the typed config and the raw JSON value
/// (echoed into the run manifest).
pub fn load<T: DeserializeOwned>(path: &Path) -> anyhow::Result<(T, serde_json::Value)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(obj) = value.as_object() {
        for section in SEEDLESS_SECTIONS {
            if obj.get(section).and_then(|s| s.get("seed")).is_some() {
                return Err(CliError::Config(format!(
                    "{section}.seed: seeds are derived from master_seed and may not be set"
                ))
                .into());
            }
        }
    }
    let typed = serde_path_to_error::deserialize(value.clone()).map_err(|e| {
        let key = e.path().to_string();
        CliError::Config(format!("{key}: {}", e.into_inner()))
    })?;
    Ok((typed, value))
}

/// Resolves a config path against the output root unless it is absolute.
pub fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
        .context("creating output directory")?;
    Ok(())
}
