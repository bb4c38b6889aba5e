//! Semantic knowledge base: per-class Gaussian prototypes over semantic
//! features, cosine matching, likelihood-based unknown detection and the
//! self-updating mechanism that promotes clusters of unknowns to new entries.

mod buffer;
mod io;

pub use buffer::{absorb_unknown, AbsorbOutcome, Cluster, UnknownBuffer};
pub use io::{decode_skb, encode_skb, load_skb, save_skb, SKB_MAGIC};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::SemanticFeature;

/// Lower bound applied to every per-dimension variance.
pub const VAR_FLOOR: f64 = 1e-6;

/// Self-added entries get ids at or above this value so they never collide
/// with dataset class ids.
pub const SELF_ADDED_ID_BASE: u32 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Trained,
    SelfAdded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkbEntry {
    pub class_id: u32,
    pub center: Vec<f64>,
    /// Diagonal covariance, floored at [`VAR_FLOOR`].
    pub var: Vec<f64>,
    pub provenance: Provenance,
    /// Number of features the entry was estimated from.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skb {
    pub dim: usize,
    pub entries: Vec<SkbEntry>,
}

impl Skb {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, class_id: u32) -> Option<&SkbEntry> {
        self.entries.iter().find(|e| e.class_id == class_id)
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.entries.iter().map(|e| e.class_id).collect()
    }

    pub fn next_self_added_id(&self) -> u32 {
        self.entries
            .iter()
            .map(|e| e.class_id + 1)
            .max()
            .unwrap_or(0)
            .max(SELF_ADDED_ID_BASE)
    }

    /// Appends an entry; ids must stay unique and dimensions consistent.
    pub fn push(&mut self, entry: SkbEntry) -> Result<()> {
        if entry.center.len() != self.dim || entry.var.len() != self.dim {
            return Err(Error::Shape(format!(
                "entry has {} dims, knowledge base has {}",
                entry.center.len(),
                self.dim
            )));
        }
        if self.entry(entry.class_id).is_some() {
            return Err(Error::Config(format!("duplicate class id {}", entry.class_id)));
        }
        self.entries.push(entry);
        Ok(())
    }
}

/// Per-dimension mean and unbiased variance (floored).
pub(crate) fn mean_and_var(members: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let n = members.len() as f64;
    let d = members[0].len();
    let mut mean = vec![0.0; d];
    for m in members {
        mean.iter_mut().zip(m.iter()).for_each(|(a, b)| *a += b);
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let mut var = vec![0.0; d];
    if members.len() > 1 {
        for m in members {
            for i in 0..d {
                let e = m[i] - mean[i];
                var[i] += e * e;
            }
        }
        var.iter_mut().for_each(|v| *v /= n - 1.0);
    }
    var.iter_mut().for_each(|v| *v = v.max(VAR_FLOOR));
    (mean, var)
}

/// Builds the initial knowledge base from labeled validation features,
/// one entry per class in ascending id order.
pub fn build_skb(features: &[(u32, SemanticFeature)]) -> Result<Skb> {
    let Some((_, first)) = features.first() else {
        return Err(Error::Config("no features".into()));
    };
    let dim = first.dim();
    let mut by_class: std::collections::BTreeMap<u32, Vec<&[f64]>> = Default::default();
    for (label, f) in features {
        if f.dim() != dim {
            return Err(Error::Shape(format!("feature of dim {} among dim {dim}", f.dim())));
        }
        by_class.entry(*label).or_default().push(f.as_slice());
    }
    let mut skb = Skb::empty(dim);
    for (class_id, members) in by_class {
        if members.len() < 2 {
            return Err(Error::InsufficientSupport {
                class: class_id,
                count: members.len(),
                required: 2,
            });
        }
        let (center, var) = mean_and_var(&members);
        skb.push(SkbEntry {
            class_id,
            center,
            var,
            provenance: Provenance::Trained,
            support: members.len(),
        })?;
    }
    Ok(skb)
}

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("dimension {} vs {}", a.len(), b.len())));
    }
    Ok(())
}

/// Cosine similarity.
pub fn similarity(z: &[f64], k: &[f64]) -> Result<f64> {
    check_dims(z, k)?;
    let dot: f64 = z.iter().zip(k).map(|(a, b)| a * b).sum();
    let nz = z.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nk = k.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nz == 0.0 || nk == 0.0 {
        return Err(Error::DegenerateFeature);
    }
    Ok((dot / (nz * nk)).clamp(-1.0, 1.0))
}

/// Class of the entry with the highest cosine similarity; ties go to the
/// lowest class id.
pub fn match_feature(z: &[f64], skb: &Skb) -> Result<u32> {
    let mut best: Option<(f64, u32)> = None;
    for e in &skb.entries {
        let s = similarity(z, &e.center)?;
        best = match best {
            Some((bs, bid)) if bs > s || (bs == s && bid < e.class_id) => Some((bs, bid)),
            _ => Some((s, e.class_id)),
        };
    }
    best.map(|(_, id)| id).ok_or(Error::EmptySkb)
}

/// `P_m(z) = 1 - prod_i erf(|z_i - k_i| / (sigma_i sqrt 2))`: one minus the
/// probability mass of the class Gaussian lying closer to the center than
/// `z` in every dimension.
pub fn likelihood(z: &[f64], entry: &SkbEntry) -> Result<f64> {
    check_dims(z, &entry.center)?;
    let mut prod = 1.0;
    for ((zi, ki), vi) in z.iter().zip(&entry.center).zip(&entry.var) {
        prod *= libm::erf((zi - ki).abs() / (vi.sqrt() * std::f64::consts::SQRT_2));
    }
    Ok((1.0 - prod).clamp(0.0, 1.0))
}

/// Largest likelihood over all entries.
pub fn max_likelihood(z: &[f64], skb: &Skb) -> Result<f64> {
    if skb.is_empty() {
        return Err(Error::EmptySkb);
    }
    skb.entries
        .iter()
        .try_fold(0.0f64, |m, e| Ok(m.max(likelihood(z, e)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "class_id")]
pub enum Detection {
    Known(u32),
    Unknown,
}

/// Unknown iff every class likelihood is below `tau`; otherwise the cosine
/// match. Also returns the maximal likelihood.
pub fn detect_scored(z: &[f64], skb: &Skb, tau: f64) -> Result<(Detection, f64)> {
    let p = max_likelihood(z, skb)?;
    if p < tau {
        Ok((Detection::Unknown, p))
    } else {
        Ok((Detection::Known(match_feature(z, skb)?), p))
    }
}

pub fn detect(z: &[f64], skb: &Skb, tau: f64) -> Result<Detection> {
    detect_scored(z, skb, tau).map(|(d, _)| d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauCalibration {
    pub tau: f64,
    /// Fraction of the calibration features with `max P >= tau`.
    pub achieved_acceptance: f64,
    /// All calibration likelihoods were equal, so only one acceptance is attainable.
    pub degenerate: bool,
}

/// Picks `tau` as the `(1 - target)` quantile of the maximal likelihoods of
/// known features, so at least `target` of them are accepted.
pub fn calibrate_tau(features: &[SemanticFeature], skb: &Skb, target_acceptance: f64) -> Result<TauCalibration> {
    if features.is_empty() {
        return Err(Error::Config("no calibration features".into()));
    }
    if !(target_acceptance > 0.0 && target_acceptance < 1.0) {
        return Err(Error::Config(format!(
            "target acceptance {target_acceptance} must lie in (0, 1)"
        )));
    }
    let mut p = features
        .iter()
        .map(|f| max_likelihood(f.as_slice(), skb))
        .collect::<Result<Vec<_>>>()?;
    p.sort_by(|a, b| a.total_cmp(b));
    let n = p.len();
    let accept = ((target_acceptance * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    let tau = p[n - accept];
    let passing = p.iter().filter(|&&v| v >= tau).count();
    let degenerate = p[0] == p[n - 1];
    if degenerate {
        log::warn!("all calibration likelihoods equal {tau}; only acceptance 1.0 is attainable");
    }
    Ok(TauCalibration {
        tau,
        achieved_acceptance: passing as f64 / n as f64,
        degenerate,
    })
}
