//! Closed-set and open-set evaluation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{baseline_classify, BaselineParams, ResultRow, ResultTable, Split};
use crate::error::{Error, Result};
use crate::net::{extract_feature, ModelParams, SemanticFeature};
use crate::photon_sim::Dataset;
use crate::skb::{
    absorb_unknown, build_skb, calibrate_tau, detect_scored, match_feature, Detection, Skb, TauCalibration,
    UnknownBuffer,
};

pub const SEMANTIC_METHOD: &str = "semantic matching";
pub const BASELINE_METHOD: &str = "direct classifier";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub truth: u32,
    pub snr_db: f32,
    pub predicted: u32,
}

fn features(ds: &Dataset, indices: &[usize], model: &ModelParams) -> Result<Vec<SemanticFeature>> {
    indices
        .par_iter()
        .map(|&i| extract_feature(&ds.records[i], model))
        .collect()
}

/// Builds a knowledge base from the features of the given records.
pub fn build_skb_from(ds: &Dataset, indices: &[usize], model: &ModelParams) -> Result<Skb> {
    let feats = features(ds, indices, model)?;
    let labeled: Vec<(u32, SemanticFeature)> = indices.iter().map(|&i| ds.records[i].label).zip(feats).collect();
    build_skb(&labeled)
}

pub fn calibration_features(ds: &Dataset, indices: &[usize], model: &ModelParams) -> Result<Vec<SemanticFeature>> {
    features(ds, indices, model)
}

pub fn semantic_predictions(ds: &Dataset, indices: &[usize], model: &ModelParams, skb: &Skb) -> Result<Vec<Prediction>> {
    indices
        .par_iter()
        .map(|&i| {
            let r = &ds.records[i];
            let z = extract_feature(r, model)?;
            Ok(Prediction {
                index: i,
                truth: r.label,
                snr_db: r.snr_db,
                predicted: match_feature(z.as_slice(), skb)?,
            })
        })
        .collect()
}

pub fn baseline_predictions(ds: &Dataset, indices: &[usize], baseline: &BaselineParams) -> Result<Vec<Prediction>> {
    indices
        .par_iter()
        .map(|&i| {
            let r = &ds.records[i];
            Ok(Prediction {
                index: i,
                truth: r.label,
                snr_db: r.snr_db,
                predicted: baseline_classify(r, baseline)?,
            })
        })
        .collect()
}

/// One row per SNR level (ascending) with the fraction of correct predictions.
pub fn accuracy_by_snr(preds: &[Prediction], method: &str, config_hash: &str) -> Vec<ResultRow> {
    let mut by_snr: BTreeMap<u32, (f32, usize, usize)> = BTreeMap::new();
    for p in preds {
        // order-preserving key for finite f32
        let bits = p.snr_db.to_bits();
        let key = if bits >> 31 == 1 { !bits } else { bits | 1 << 31 };
        let e = by_snr.entry(key).or_insert((p.snr_db, 0, 0));
        e.1 += usize::from(p.predicted == p.truth);
        e.2 += 1;
    }
    by_snr
        .into_values()
        .map(|(snr, correct, n)| ResultRow {
            method: method.to_string(),
            x: snr as f64,
            accuracy: correct as f64 / n as f64,
            n,
            config_hash: config_hash.to_string(),
        })
        .collect()
}

/// Accuracy versus SNR on test records of classes present in the knowledge
/// base; records of other classes are ignored.
pub fn eval_closed(
    ds: &Dataset,
    test: &[usize],
    model: &ModelParams,
    skb: &Skb,
    baseline: Option<&BaselineParams>,
    config_hash: &str,
) -> Result<ResultTable> {
    let known: BTreeSet<u32> = skb.class_ids().into_iter().collect();
    let idx: Vec<usize> = test.iter().copied().filter(|&i| known.contains(&ds.records[i].label)).collect();
    let mut table = ResultTable::new("closed_set_accuracy_vs_snr", "snr_db");
    table.rows = accuracy_by_snr(&semantic_predictions(ds, &idx, model, skb)?, SEMANTIC_METHOD, config_hash);
    if let Some(b) = baseline {
        table.rows.extend(accuracy_by_snr(&baseline_predictions(ds, &idx, b)?, BASELINE_METHOD, config_hash));
    }
    Ok(table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenSetProtocol {
    pub known: Vec<u32>,
    pub unknown: Vec<u32>,
    pub update: bool,
    #[serde(default = "default_acceptance")]
    pub target_acceptance: f64,
    pub order_seed: u64,
    #[serde(default = "default_maturity")]
    pub maturity: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
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

impl OpenSetProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.known.is_empty() {
            return Err(Error::Config("no known classes".into()));
        }
        if let Some(c) = self.unknown.iter().find(|c| self.known.contains(c)) {
            return Err(Error::Config(format!("class {c} is both known and unknown")));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        UnknownBuffer::new(self.maturity, self.radius)?;
        Ok(())
    }

    /// Knowledge base, threshold and test stream for one evaluation. The
    /// base and threshold come from validation records of known classes; the
    /// stream holds known-class test records plus every record of the
    /// unknown classes. `snr` restricts everything to one level.
    pub fn prepare(
        &self,
        ds: &Dataset,
        split: &Split,
        model: &ModelParams,
        snr: Option<f32>,
    ) -> Result<(Skb, TauCalibration, Vec<usize>)> {
        self.validate()?;
        if let Some(c) = self.unknown.iter().find(|c| model.class_ids.contains(c)) {
            return Err(Error::Config(format!("unknown class {c} was seen in training")));
        }
        let at_snr = |i: usize| snr.is_none_or(|s| ds.records[i].snr_db == s);
        let val: Vec<usize> = split
            .val
            .iter()
            .copied()
            .filter(|&i| at_snr(i) && self.known.contains(&ds.records[i].label))
            .collect();
        let skb = build_skb_from(ds, &val, model)?;
        let tau = calibrate_tau(&calibration_features(ds, &val, model)?, &skb, self.target_acceptance)?;
        let mut stream: Vec<usize> = split
            .test
            .iter()
            .copied()
            .filter(|&i| at_snr(i) && self.known.contains(&ds.records[i].label))
            .collect();
        stream.extend((0..ds.records.len()).filter(|&i| at_snr(i) && self.unknown.contains(&ds.records[i].label)));
        stream.sort_unstable();
        Ok((skb, tau, stream))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Known,
    Unknown,
}

/// One line of the per-sample prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenLogRecord {
    pub sample_id: usize,
    pub truth: u32,
    pub max_p: f64,
    pub decision: Decision,
    pub predicted_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpenOutcome {
    pub update: bool,
    pub tau: f64,
    pub accuracy: f64,
    pub known_accuracy: f64,
    pub unknown_accuracy: f64,
    pub n_known: usize,
    pub n_unknown: usize,
    /// Self-added entry id to the truth class it stands for.
    pub mapping: BTreeMap<u32, u32>,
    pub log: Vec<OpenLogRecord>,
    #[serde(skip)]
    pub skb_after: Skb,
}

/// Maps each predicted id outside `known` to the truth class most often
/// predicted as it; ties go to the lowest truth id.
pub fn majority_mapping(log: &[OpenLogRecord], known: &[u32]) -> BTreeMap<u32, u32> {
    let mut votes: BTreeMap<u32, BTreeMap<u32, usize>> = BTreeMap::new();
    for r in log {
        if let Some(id) = r.predicted_id.filter(|id| !known.contains(id)) {
            *votes.entry(id).or_default().entry(r.truth).or_default() += 1;
        }
    }
    votes
        .into_iter()
        .map(|(id, v)| {
            let mut best = (0, u32::MAX);
            for (truth, count) in v {
                if count > best.0 {
                    best = (count, truth);
                }
            }
            (id, best.1)
        })
        .collect()
}

/// `(joint, known, unknown)` accuracy of a prediction log. A known-class
/// sample counts when predicted as its class; an unknown-class sample when
/// flagged unknown or, with updates on, when assigned a self-added entry
/// mapped to its class. Empty groups score 0.
pub fn replay_open_accuracy(
    log: &[OpenLogRecord],
    known: &[u32],
    mapping: &BTreeMap<u32, u32>,
    update: bool,
) -> (f64, f64, f64) {
    let (mut kc, mut kn, mut uc, mut un) = (0usize, 0usize, 0usize, 0usize);
    for r in log {
        if known.contains(&r.truth) {
            kn += 1;
            kc += usize::from(r.decision == Decision::Known && r.predicted_id == Some(r.truth));
        } else {
            un += 1;
            let ok = match (r.decision, r.predicted_id) {
                (Decision::Unknown, _) => true,
                (Decision::Known, Some(id)) => update && mapping.get(&id) == Some(&r.truth),
                (Decision::Known, None) => false,
            };
            uc += usize::from(ok);
        }
    }
    let frac = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    (frac(kc + uc, kn + un), frac(kc, kn), frac(uc, un))
}

/// Streams `stream` in an order shuffled by `protocol.order_seed`, detecting
/// and matching each sample against a copy of `skb0`; with updates on,
/// flagged samples feed the unknown buffer and mature clusters grow the
/// knowledge base.
pub fn eval_open(
    ds: &Dataset,
    model: &ModelParams,
    skb0: &Skb,
    tau: f64,
    stream: &[usize],
    protocol: &OpenSetProtocol,
) -> Result<OpenOutcome> {
    protocol.validate()?;
    if let Some(e) = skb0.entries.iter().find(|e| protocol.unknown.contains(&e.class_id)) {
        return Err(Error::Config(format!("unknown class {} is in the knowledge base", e.class_id)));
    }
    let mut order = stream.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(protocol.order_seed));
    let feats = features(ds, &order, model)?;
    let mut skb = skb0.clone();
    let mut buffer = UnknownBuffer::new(protocol.maturity, protocol.radius)?;
    let mut log = Vec::with_capacity(order.len());
    for (&i, z) in order.iter().zip(&feats) {
        let (det, max_p) = detect_scored(z.as_slice(), &skb, tau)?;
        let (decision, predicted_id) = match det {
            Detection::Known(id) => (Decision::Known, Some(id)),
            Detection::Unknown => {
                if protocol.update {
                    absorb_unknown(z.as_slice(), &mut buffer, &mut skb)?;
                }
                (Decision::Unknown, None)
            }
        };
        log.push(OpenLogRecord {
            sample_id: i,
            truth: ds.records[i].label,
            max_p,
            decision,
            predicted_id,
        });
    }
    let known = skb0.class_ids();
    let mapping = majority_mapping(&log, &known);
    let (accuracy, known_accuracy, unknown_accuracy) = replay_open_accuracy(&log, &known, &mapping, protocol.update);
    let n_known = log.iter().filter(|r| known.contains(&r.truth)).count();
    Ok(OpenOutcome {
        update: protocol.update,
        tau,
        accuracy,
        known_accuracy,
        unknown_accuracy,
        n_known,
        n_unknown: log.len() - n_known,
        mapping,
        log,
        skb_after: skb,
    })
}

pub const UPDATE_ON: &str = "skb update on";
pub const UPDATE_OFF: &str = "skb update off";

/// Outcomes of one open-set setting, with and without updates.
#[derive(Debug, Clone, Serialize)]
pub struct OpenSetting {
    pub x: f64,
    pub snr_db: Option<f32>,
    pub unknown: Vec<u32>,
    pub tau: TauCalibration,
    pub off: OpenOutcome,
    pub on: OpenOutcome,
}

fn open_rows(table: &mut ResultTable, s: &OpenSetting, config_hash: &str) {
    let mut push = |method: String, accuracy: f64, n: usize| {
        table.rows.push(ResultRow {
            method,
            x: s.x,
            accuracy,
            n,
            config_hash: config_hash.to_string(),
        })
    };
    for (name, o) in [(UPDATE_OFF, &s.off), (UPDATE_ON, &s.on)] {
        push(name.to_string(), o.accuracy, o.n_known + o.n_unknown);
        push(format!("{name} (known)"), o.known_accuracy, o.n_known);
        push(format!("{name} (unknown)"), o.unknown_accuracy, o.n_unknown);
    }
}

fn run_setting(
    ds: &Dataset,
    split: &Split,
    model: &ModelParams,
    template: &OpenSetProtocol,
    unknown: Vec<u32>,
    snr: Option<f32>,
    x: f64,
) -> Result<OpenSetting> {
    let mut proto = template.clone();
    proto.unknown = unknown.clone();
    let (skb, tau, stream) = proto.prepare(ds, split, model, snr)?;
    proto.update = false;
    let off = eval_open(ds, model, &skb, tau.tau, &stream, &proto)?;
    proto.update = true;
    let on = eval_open(ds, model, &skb, tau.tau, &stream, &proto)?;
    Ok(OpenSetting {
        x,
        snr_db: snr,
        unknown,
        tau,
        off,
        on,
    })
}

/// Accuracy versus SNR with the first class of `template.unknown` held out.
pub fn open_sweep_snr(
    ds: &Dataset,
    split: &Split,
    model: &ModelParams,
    template: &OpenSetProtocol,
    config_hash: &str,
) -> Result<(ResultTable, Vec<OpenSetting>)> {
    let Some(&u) = template.unknown.first() else {
        return Err(Error::Config("the SNR sweep needs one unknown class".into()));
    };
    let mut table = ResultTable::new("open_set_accuracy_vs_snr", "snr_db");
    let mut settings = Vec::new();
    for snr in ds.snr_levels() {
        let s = run_setting(ds, split, model, template, vec![u], Some(snr), snr as f64)?;
        open_rows(&mut table, &s, config_hash);
        settings.push(s);
    }
    Ok((table, settings))
}

/// Accuracy at the top SNR versus the number of unknown classes, taking the
/// first `k` classes of `template.unknown` for `k = 1..=len`.
pub fn open_sweep_unknown_count(
    ds: &Dataset,
    split: &Split,
    model: &ModelParams,
    template: &OpenSetProtocol,
    config_hash: &str,
) -> Result<(ResultTable, Vec<OpenSetting>)> {
    let Some(&top) = ds.snr_levels().last() else {
        return Err(Error::Config("empty dataset".into()));
    };
    let mut table = ResultTable::new("open_set_accuracy_vs_unknown_count", "unknown_classes");
    let mut settings = Vec::new();
    for k in 1..=template.unknown.len() {
        let s = run_setting(ds, split, model, template, template.unknown[..k].to_vec(), Some(top), k as f64)?;
        open_rows(&mut table, &s, config_hash);
        settings.push(s);
    }
    Ok((table, settings))
}
