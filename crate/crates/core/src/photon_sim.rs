//! Time-of-flight forward model and photon-counting channel.
//!
//! A scene is mapped to a unit-mass temporal profile by placing one Gaussian
//! kernel per target pixel at its round-trip time `2 * depth / c`. The kernel
//! variance is the sum of the laser pulse and detector jitter variances. A
//! histogram is then drawn bin-by-bin from a Poisson law whose mean mixes the
//! profile with a flat background:
//!
//! ```text
//! lambda_i = N_sig * s_i + N_bg / B,   N_sig + N_bg = budget,
//! SNR_dB   = 10 log10(N_sig / N_bg)
//! ```
//!
//! Detector dead time and pile-up are not modeled.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scene::{gen_scene, DepthReflMap, SceneClassSpec};
use crate::seed::{derive, sample_seed};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// `2 * sqrt(2 ln 2)`
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub const DATASET_MAGIC: &[u8; 4] = b"TSPD";
pub const DATASET_VERSION: u16 = 1;

/// Seed tag separating the scene-variant stream from the photon stream.
const VARIANT_TAG: u64 = 0x5343_454E_4500_0001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseModel {
    /// Laser pulse FWHM, seconds.
    #[serde(default = "default_pulse_fwhm")]
    pub width_fwhm_s: f64,
    /// Detector timing jitter FWHM, seconds.
    #[serde(default = "default_jitter_fwhm")]
    pub jitter_fwhm_s: f64,
}

fn default_pulse_fwhm() -> f64 {
    10e-12
}

fn default_jitter_fwhm() -> f64 {
    100e-12
}

impl Default for PulseModel {
    fn default() -> Self {
        Self {
            width_fwhm_s: default_pulse_fwhm(),
            jitter_fwhm_s: default_jitter_fwhm(),
        }
    }
}

impl PulseModel {
    /// Standard deviation of the combined pulse-and-jitter kernel, seconds.
    pub fn kernel_sigma_s(&self) -> f64 {
        let sp = self.width_fwhm_s / FWHM_PER_SIGMA;
        let sj = self.jitter_fwhm_s / FWHM_PER_SIGMA;
        (sp * sp + sj * sj).sqrt()
    }

    pub fn validate(&self, axis: &TimeAxis) -> Result<()> {
        let window = axis.window_s();
        for (name, w) in [("pulse", self.width_fwhm_s), ("jitter", self.jitter_fwhm_s)] {
            if !(w > 0.0 && w < window) {
                return Err(Error::Config(format!(
                    "{name} FWHM {w} s must be positive and shorter than the {window} s window"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeAxis {
    #[serde(default = "default_bin_width")]
    pub bin_width_s: f64,
    #[serde(default = "default_bin_count")]
    pub bin_count: usize,
}

fn default_bin_width() -> f64 {
    10e-12
}

fn default_bin_count() -> usize {
    256
}

impl Default for TimeAxis {
    fn default() -> Self {
        Self {
            bin_width_s: default_bin_width(),
            bin_count: default_bin_count(),
        }
    }
}

impl TimeAxis {
    pub fn new(bin_width_s: f64, bin_count: usize) -> Self {
        Self {
            bin_width_s,
            bin_count,
        }
    }

    pub fn window_s(&self) -> f64 {
        self.bin_width_s * self.bin_count as f64
    }

    pub fn validate(&self, repetition_period_s: f64) -> Result<()> {
        if !(self.bin_width_s > 0.0 && self.bin_width_s.is_finite()) {
            return Err(Error::Config(format!("bin width {} s must be positive", self.bin_width_s)));
        }
        if self.bin_count < 16 {
            return Err(Error::Config(format!("bin count {} < 16", self.bin_count)));
        }
        if self.window_s() > repetition_period_s * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "window {} s exceeds repetition period {repetition_period_s} s",
                self.window_s()
            )));
        }
        Ok(())
    }

    /// Fractional bin position of a round-trip time; bin `i` is centered on `i * bin_width`.
    pub fn bin_of_time(&self, t: f64) -> f64 {
        t / self.bin_width_s
    }
}

pub fn round_trip_time(depth_m: f64) -> f64 {
    2.0 * depth_m / SPEED_OF_LIGHT
}

/// Unit-mass temporal profile `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealIntensity {
    pub axis: TimeAxis,
    pub values: Vec<f64>,
}

/// Kernel tails beyond this many standard deviations are dropped (< 1e-31 relative).
const KERNEL_HALF_WIDTH_SIGMAS: f64 = 12.0;

pub fn ideal_intensity(map: &DepthReflMap, pulse: &PulseModel, axis: &TimeAxis) -> Result<IdealIntensity> {
    if map.target_pixels() == 0 {
        return Err(Error::EmptyTarget);
    }
    let last = (axis.bin_count - 1) as f64;
    // Pixels sharing a depth contribute one kernel with summed weight.
    let mut weights: BTreeMap<u32, f64> = BTreeMap::new();
    for y in 0..map.height {
        for x in 0..map.width {
            let (d, r) = map.get(x, y);
            if r == 0.0 {
                continue;
            }
            let center = axis.bin_of_time(round_trip_time(d as f64));
            if !(0.0..=last).contains(&center) {
                return Err(Error::OutOfRange { x, y, depth: d as f64 });
            }
            *weights.entry(d.to_bits()).or_insert(0.0) += r as f64;
        }
    }

    let sigma_bins = pulse.kernel_sigma_s() / axis.bin_width_s;
    let inv_two_var = 1.0 / (2.0 * sigma_bins * sigma_bins);
    let reach = KERNEL_HALF_WIDTH_SIGMAS * sigma_bins;
    let mut values = vec![0.0; axis.bin_count];
    for (bits, w) in weights {
        let center = axis.bin_of_time(round_trip_time(f32::from_bits(bits) as f64));
        let lo = (center - reach).floor().max(0.0) as usize;
        let hi = ((center + reach).ceil() as usize).min(axis.bin_count - 1);
        for (i, v) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let dx = i as f64 - center;
            *v += w * (-dx * dx * inv_two_var).exp();
        }
    }
    let total: f64 = values.iter().sum();
    values.iter_mut().for_each(|v| *v /= total);
    Ok(IdealIntensity { axis: *axis, values })
}

/// Splits a photon budget into `(N_sig, N_bg)` for the given SNR.
pub fn signal_background(snr_db: f64, budget: f64) -> (f64, f64) {
    let ratio = 10f64.powf(snr_db / 10.0);
    let n_sig = budget * ratio / (1.0 + ratio);
    (n_sig, budget - n_sig)
}

/// Per-bin Poisson means `lambda_i`.
pub fn expected_counts(s: &IdealIntensity, snr_db: f64, budget: f64) -> Vec<f64> {
    let (n_sig, n_bg) = signal_background(snr_db, budget);
    let bg = n_bg / s.values.len() as f64;
    s.values.iter().map(|&v| n_sig * v + bg).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalHistogram {
    pub axis: TimeAxis,
    pub counts: Vec<u32>,
    pub label: u32,
    pub snr_db: f32,
    /// Expected total photon count.
    pub photon_budget: f64,
    pub seed: u64,
}

impl TemporalHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Draws one histogram; a pure function of its arguments.
pub fn sample_histogram(
    s: &IdealIntensity,
    snr_db: f64,
    budget: f64,
    label: u32,
    seed: u64,
) -> Result<TemporalHistogram> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Config(format!("photon budget {budget} must be positive")));
    }
    let lambda = expected_counts(s, snr_db, budget);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = lambda
        .iter()
        .map(|&l| {
            if l > 0.0 {
                Poisson::new(l).expect("positive finite rate").sample(&mut rng) as u32
            } else {
                0
            }
        })
        .collect();
    Ok(TemporalHistogram {
        axis: s.axis,
        counts,
        label,
        snr_db: snr_db as f32,
        photon_budget: budget,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub classes: Vec<SceneClassSpec>,
    pub samples_per_cell: usize,
    pub snr_db: Vec<f64>,
    #[serde(default = "default_budget")]
    pub photon_budget: f64,
    #[serde(default)]
    pub axis: TimeAxis,
    #[serde(default)]
    pub pulse: PulseModel,
    #[serde(default = "default_rep_rate")]
    pub repetition_rate_hz: f64,
    #[serde(default = "default_scene_side")]
    pub scene_width: usize,
    #[serde(default = "default_scene_side")]
    pub scene_height: usize,
    pub master_seed: u64,
}

fn default_budget() -> f64 {
    2e5
}

fn default_rep_rate() -> f64 {
    20e6
}

fn default_scene_side() -> usize {
    32
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("no classes".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("SNR list is empty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("non-finite SNR".into()));
        }
        if self.samples_per_cell == 0 {
            return Err(Error::Config("samples_per_cell must be >= 1".into()));
        }
        if !(self.photon_budget > 0.0 && self.photon_budget.is_finite()) {
            return Err(Error::Config("photon_budget must be positive".into()));
        }
        if !(self.repetition_rate_hz > 0.0) {
            return Err(Error::Config("repetition_rate_hz must be positive".into()));
        }
        self.axis.validate(1.0 / self.repetition_rate_hz)?;
        self.pulse.validate(&self.axis)?;
        let mut ids = std::collections::HashSet::new();
        for c in &self.classes {
            if !ids.insert(c.class_id) {
                return Err(Error::Config(format!("duplicate class_id {}", c.class_id)));
            }
            c.validate()?;
        }
        Ok(())
    }
}

/// A labeled set of histograms sharing one time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub axis: TimeAxis,
    pub records: Vec<TemporalHistogram>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Distinct SNR levels in ascending order.
    pub fn snr_levels(&self) -> Vec<f32> {
        let mut v: Vec<f32> = self.records.iter().map(|r| r.snr_db).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTally {
    pub class_id: u32,
    pub snr_db: f64,
    pub records: usize,
    pub total_photons: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: DatasetConfig,
    pub record_count: usize,
    pub snr_definition: String,
    pub seed_rule: String,
    pub cells: Vec<CellTally>,
}

pub const SNR_DEFINITION: &str =
    "SNR_dB = 10*log10(N_sig/N_bg) with N_sig + N_bg = photon budget (total-photon ratio, not per bin)";
pub const SEED_RULE: &str =
    "splitmix64 chain: mix(mix(mix(mix(master)^class)^snr_index)^sample_index); scene variant = mix(mix(seed)^0x5343454E45000001)";

/// Scene rendered for record `(class index, SNR index, sample index)`.
pub fn record_scene(cfg: &DatasetConfig, class: usize, snr_index: usize, sample: usize) -> Result<DepthReflMap> {
    let spec = &cfg.classes[class];
    let seed = sample_seed(cfg.master_seed, spec.class_id, snr_index as u32, sample as u32);
    gen_scene(spec, derive(seed, VARIANT_TAG), cfg.scene_width, cfg.scene_height)
}

/// Simulates every (class, SNR, sample) record. Output is independent of `workers`.
pub fn simulate_dataset(cfg: &DatasetConfig, workers: usize) -> Result<(Dataset, DatasetManifest)> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.classes.len())
        .flat_map(|c| {
            (0..cfg.snr_db.len()).flat_map(move |s| (0..cfg.samples_per_cell).map(move |k| (c, s, k)))
        })
        .collect();
    let run = |&(c, s, k): &(usize, usize, usize)| -> Result<TemporalHistogram> {
        let spec = &cfg.classes[c];
        let seed = sample_seed(cfg.master_seed, spec.class_id, s as u32, k as u32);
        let map = record_scene(cfg, c, s, k)?;
        let ideal = ideal_intensity(&map, &cfg.pulse, &cfg.axis)?;
        sample_histogram(&ideal, cfg.snr_db[s], cfg.photon_budget, spec.class_id, seed)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let records = pool.install(|| jobs.par_iter().map(run).collect::<Result<Vec<_>>>())?;

    let mut cells = Vec::new();
    let per_cell = cfg.samples_per_cell;
    for (c, spec) in cfg.classes.iter().enumerate() {
        for (s, &snr) in cfg.snr_db.iter().enumerate() {
            let start = (c * cfg.snr_db.len() + s) * per_cell;
            let chunk = &records[start..start + per_cell];
            cells.push(CellTally {
                class_id: spec.class_id,
                snr_db: snr,
                records: chunk.len(),
                total_photons: chunk.iter().map(|r| r.total()).sum(),
            });
        }
    }
    let manifest = DatasetManifest {
        config: cfg.clone(),
        record_count: records.len(),
        snr_definition: SNR_DEFINITION.into(),
        seed_rule: SEED_RULE.into(),
        cells,
    };
    Ok((
        Dataset {
            axis: cfg.axis,
            records,
        },
        manifest,
    ))
}

pub fn manifest_path(dataset_path: &Path) -> PathBuf {
    let mut p = dataset_path.as_os_str().to_owned();
    p.push(".manifest.json");
    PathBuf::from(p)
}

/// Simulates the dataset and writes it plus its JSON manifest beside it.
pub fn generate_dataset(cfg: &DatasetConfig, out_path: &Path, workers: usize) -> Result<(Dataset, DatasetManifest)> {
    let (ds, manifest) = simulate_dataset(cfg, workers)?;
    save_dataset(&ds, out_path)?;
    let mpath = manifest_path(out_path);
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    write_atomic(&mpath, &json)?;
    Ok((ds, manifest))
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let b = ds.axis.bin_count;
    let mut e = Encoder::with_capacity(22 + ds.records.len() * (24 + 4 * b));
    e.bytes(DATASET_MAGIC);
    e.u16(DATASET_VERSION);
    e.u32(b as u32);
    e.f64(ds.axis.bin_width_s);
    e.u32(ds.records.len() as u32);
    for r in &ds.records {
        e.u32(r.label);
        e.f32(r.snr_db);
        e.f64(r.photon_budget);
        e.u64(r.seed);
        for &c in &r.counts {
            e.u32(c);
        }
    }
    e.into_inner()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut d = Decoder::new(bytes);
    d.magic(DATASET_MAGIC)?;
    d.version(DATASET_VERSION)?;
    let at = d.offset();
    let bin_count = d.u32("bin_count")? as usize;
    if bin_count == 0 {
        return Err(Error::format(at, "bin_count is zero"));
    }
    let bin_width_s = d.f64("bin_width")?;
    let n = d.u32("record_count")? as usize;
    let axis = TimeAxis::new(bin_width_s, bin_count);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let label = d.u32("label")?;
        let snr_db = d.f32("snr_db")?;
        let photon_budget = d.f64("budget")?;
        let seed = d.u64("seed")?;
        let counts = (0..bin_count).map(|_| d.u32("counts")).collect::<Result<Vec<_>>>()?;
        records.push(TemporalHistogram {
            axis,
            counts,
            label,
            snr_db,
            photon_budget,
            seed,
        });
    }
    d.finish()?;
    Ok(Dataset { axis, records })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(ds))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_file(path)?)
}
