//! Evaluation protocols: stratified splits, the direct-classifier baseline,
//! closed-set and open-set accuracy sweeps, and CSV/SVG reporting.

mod baseline;
mod eval;
mod report;

pub use baseline::{
    baseline_classify, baseline_probs, decode_baseline, encode_baseline, load_baseline, save_baseline,
    train_baseline, BaselineConfig, BaselineParams, BASELINE_MAGIC,
};
pub use eval::{
    accuracy_by_snr, baseline_predictions, build_skb_from, calibration_features, eval_closed, eval_open,
    majority_mapping, replay_open_accuracy, semantic_predictions, Decision, OpenLogRecord, OpenOutcome,
    OpenSetProtocol, OpenSetting, Prediction, BASELINE_METHOD, SEMANTIC_METHOD, UPDATE_OFF, UPDATE_ON,
    open_sweep_snr, open_sweep_unknown_count,
};
pub use report::{emit_report, parse_csv, render_svg, write_csv, CSV_HEADER};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::{normalize_input, Example};
use crate::photon_sim::Dataset;
use crate::scene::{ParamRange, SceneClassSpec, ShapeFamily};
use crate::seed::derive;

/// Every (class, SNR) cell needs at least this many samples to be split.
pub const MIN_CELL_SAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::Config("split fractions must lie in (0, 1)".into()));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("split fractions must sum to 1".into()));
        }
        Ok(())
    }
}

/// Record indices of the three partitions, each ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Groups record indices by `(label, SNR)`; keys ascend by label then SNR.
pub fn cells(ds: &Dataset) -> BTreeMap<(u32, u32), Vec<usize>> {
    let levels = ds.snr_levels();
    let mut out: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    for (i, r) in ds.records.iter().enumerate() {
        let s = levels.iter().position(|&l| l == r.snr_db).unwrap() as u32;
        out.entry((r.label, s)).or_default().push(i);
    }
    out
}

/// Stratified split: each (class, SNR) cell is shuffled with its own seed
/// and cut by the fractions (rounded), the test part taking the remainder.
pub fn split_dataset(ds: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let levels = ds.snr_levels();
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for ((label, snr_idx), mut idx) in cells(ds) {
        let n = idx.len();
        if n < MIN_CELL_SAMPLES {
            return Err(Error::Protocol(format!(
                "cell (class {label}, snr {} dB) has {n} samples, need at least {MIN_CELL_SAMPLES}",
                levels[snr_idx as usize]
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive(derive(spec.seed, label as u64), snr_idx as u64));
        idx.shuffle(&mut rng);
        let n_train = (n as f64 * spec.train).round() as usize;
        let n_val = (n as f64 * spec.val).round() as usize;
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Normalized training examples for the given record indices.
pub fn examples(ds: &Dataset, indices: &[usize]) -> Result<Vec<Example>> {
    indices
        .iter()
        .map(|&i| {
            let r = &ds.records[i];
            Ok(Example {
                x: normalize_input(r)?,
                label: r.label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    /// SNR in dB or unknown-class count, depending on the table.
    pub x: f64,
    pub accuracy: f64,
    pub n: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub x_label: String,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(name: impl Into<String>, x_label: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            x_label: x_label.into(),
            rows: Vec::new(),
        }
    }

    /// Accuracies of one method, in row order.
    pub fn series(&self, method: &str) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.x, r.accuracy))
            .collect()
    }

    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }
}

/// Hex SHA-256 of the compact JSON serialization.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    sha256_hex(&bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Twelve procedural classes whose depth profiles fit the default 256-bin,
/// 10 ps axis (about 0.38 m of range). Ids are `0..12`.
pub fn desk_classes() -> Vec<SceneClassSpec> {
    let r = ParamRange::new;
    let f = ParamRange::fixed;
    vec![
        SceneClassSpec::new(0, ShapeFamily::Plane, f(1.0), r(0.08, 0.12)),
        SceneClassSpec::new(1, ShapeFamily::Plane, f(1.0), r(0.08, 0.12)).with_tilt(r(0.025, 0.035)),
        SceneClassSpec::new(2, ShapeFamily::Sphere, r(0.5, 0.9), r(0.08, 0.12)).with_relief(r(0.06, 0.08)),
        SceneClassSpec::new(3, ShapeFamily::Cone, r(0.5, 0.9), r(0.08, 0.12)).with_relief(r(0.06, 0.08)),
        SceneClassSpec::new(4, ShapeFamily::Box, r(0.5, 0.9), r(0.08, 0.12)).with_relief(r(0.06, 0.08)),
        SceneClassSpec::new(5, ShapeFamily::Cross, r(0.6, 0.9), r(0.08, 0.12)).with_relief(r(0.04, 0.05)),
        SceneClassSpec::new(6, ShapeFamily::Staircase, r(0.6, 0.9), r(0.08, 0.12)).with_relief(r(0.09, 0.11)),
        SceneClassSpec::new(7, ShapeFamily::DiskOnWall, r(0.55, 0.75), r(0.08, 0.12)).with_relief(r(0.025, 0.032)),
        SceneClassSpec::new(8, ShapeFamily::Wedge, r(0.5, 0.9), r(0.08, 0.12)).with_relief(r(0.06, 0.08)),
        SceneClassSpec::new(9, ShapeFamily::SphereOnWall, r(0.4, 0.6), r(0.08, 0.12)).with_relief(r(0.1, 0.12)),
        SceneClassSpec::new(10, ShapeFamily::LShape, r(0.6, 0.9), r(0.08, 0.12)).with_relief(r(0.12, 0.14)),
        SceneClassSpec::new(11, ShapeFamily::Cylinder, r(0.3, 0.6), r(0.08, 0.12)).with_relief(r(0.12, 0.15)),
    ]
}

/// Evenly spaced SNR levels from `lo` to `hi` inclusive.
pub fn snr_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![hi],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
