//! Online grouping of unknown features.
//!
//! Each incoming unknown joins the provisional cluster whose mean is nearest
//! in cosine distance, provided that distance is within the assignment
//! radius; otherwise it founds a new cluster. A cluster that reaches the
//! maturity count is promoted: its exact arithmetic mean becomes a new
//! knowledge-base entry and the cluster leaves the buffer.

use serde::{Deserialize, Serialize};

use super::{mean_and_var, similarity, Provenance, Skb, SkbEntry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub members: Vec<Vec<f64>>,
    sum: Vec<f64>,
}

impl Cluster {
    fn new(z: &[f64]) -> Self {
        Self {
            members: vec![z.to_vec()],
            sum: z.to_vec(),
        }
    }

    fn push(&mut self, z: &[f64]) {
        self.sum.iter_mut().zip(z).for_each(|(s, v)| *s += v);
        self.members.push(z.to_vec());
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Arithmetic mean of the members, summed in arrival order.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.members.len() as f64;
        self.sum.iter().map(|s| s / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnknownBuffer {
    pub clusters: Vec<Cluster>,
    /// Members needed before a cluster is promoted.
    pub maturity: usize,
    /// Largest cosine distance `1 - cos` at which a feature joins a cluster.
    pub radius: f64,
}

impl UnknownBuffer {
    pub fn new(maturity: usize, radius: f64) -> Result<Self> {
        if maturity == 0 {
            return Err(Error::Config("maturity must be >= 1".into()));
        }
        if !(0.0..=2.0).contains(&radius) {
            return Err(Error::Config(format!("radius {radius} outside [0, 2]")));
        }
        Ok(Self {
            clusters: Vec::new(),
            maturity,
            radius,
        })
    }

    pub fn pending(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbOutcome {
    /// Index of the cluster the feature joined, before any promotion.
    pub cluster: usize,
    /// Id of the entry created if the cluster matured.
    pub promoted: Option<u32>,
}

pub fn absorb_unknown(z: &[f64], buffer: &mut UnknownBuffer, skb: &mut Skb) -> Result<AbsorbOutcome> {
    if z.len() != skb.dim {
        return Err(Error::Shape(format!("feature has {} dims, knowledge base has {}", z.len(), skb.dim)));
    }
    let mut nearest: Option<(f64, usize)> = None;
    for (i, c) in buffer.clusters.iter().enumerate() {
        let dist = 1.0 - similarity(z, &c.mean())?;
        if nearest.is_none_or(|(best, _)| dist < best) {
            nearest = Some((dist, i));
        }
    }
    let idx = match nearest {
        Some((dist, i)) if dist <= buffer.radius => {
            buffer.clusters[i].push(z);
            i
        }
        _ => {
            // a zero vector cannot seed a cosine cluster
            if z.iter().all(|&v| v == 0.0) {
                return Err(Error::DegenerateFeature);
            }
            buffer.clusters.push(Cluster::new(z));
            buffer.clusters.len() - 1
        }
    };
    let mut promoted = None;
    if buffer.clusters[idx].len() >= buffer.maturity {
        let cluster = buffer.clusters.remove(idx);
        let members: Vec<&[f64]> = cluster.members.iter().map(Vec::as_slice).collect();
        let (_, var) = mean_and_var(&members);
        let id = skb.next_self_added_id();
        skb.push(SkbEntry {
            class_id: id,
            center: cluster.mean(),
            var,
            provenance: Provenance::SelfAdded,
            support: cluster.len(),
        })?;
        log::debug!("promoted unknown cluster of {} to entry {id}", cluster.len());
        promoted = Some(id);
    }
    Ok(AbsorbOutcome { cluster: idx, promoted })
}
