//! Probabilistic encoder-decoder producing semantic features.
//!
//! The encoder maps an L1-normalized histogram to `(mu, log sigma^2)`; a
//! latent `z = mu + exp(logvar / 2) * eps` is decoded back to a unit-mass
//! profile through a softmax. Each training class owns a learned center
//! `mu_y` (a row of the one-hot-to-latent map), and the loss is
//!
//! ```text
//! L = L_rec + beta * KL( N(mu, diag sigma^2) || N(mu_y, I) )
//! ```
//!
//! At inference the encoder mean `mu` is the semantic feature.

mod io;
mod train;

pub use io::{decode_params, encode_params, load_params, save_params, write_loss_trace, CHECKPOINT_MAGIC};
pub use train::{train, EpochLoss, TrainConfig, TrainOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{backprop_stack, run_stack, softmax, softmax_backward, Dense, Trace};
use crate::photon_sim::TemporalHistogram;

/// Encoder mean for one histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticFeature(pub Vec<f64>);

impl SemanticFeature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for SemanticFeature {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconLoss {
    /// `sum_i (xhat_i - x_i)^2`
    #[default]
    SquaredError,
    /// Poisson/multinomial negative log-likelihood relative to a perfect fit,
    /// `sum_i x_i (ln x_i - ln xhat_i)`.
    PoissonNll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub input_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

/// All trainable weights plus the fixed input gain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Multiplies the normalized histogram before the first layer so inputs
    /// are O(1); not trained.
    pub input_scale: f64,
    /// Hidden layers then a final `2d` output (`mu` then `logvar`).
    pub encoder: Vec<Dense>,
    /// Hidden layers then a final `B`-logit output.
    pub decoder: Vec<Dense>,
    /// Training class id for each row of `centers`.
    pub class_ids: Vec<u32>,
    /// `M x d` row-major class centers.
    pub centers: Vec<f64>,
}

impl ModelParams {
    /// Glorot-initialized network; centers drawn from `N(0, I)`.
    pub fn init(arch: &Architecture, class_ids: &[u32], seed: u64) -> Result<Self> {
        if arch.latent_dim < 2 {
            return Err(Error::Config("latent dimension must be >= 2".into()));
        }
        if arch.input_dim == 0 || class_ids.is_empty() {
            return Err(Error::Config("input dimension and class list must be non-empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stack = |dims: Vec<usize>, rng: &mut ChaCha8Rng| {
            dims.windows(2).map(|w| Dense::glorot(w[0], w[1], rng)).collect::<Vec<_>>()
        };
        let d = arch.latent_dim;
        let mut enc_dims = vec![arch.input_dim];
        enc_dims.extend(&arch.encoder_hidden);
        enc_dims.push(2 * d);
        let mut dec_dims = vec![d];
        dec_dims.extend(&arch.decoder_hidden);
        dec_dims.push(arch.input_dim);
        let encoder = stack(enc_dims, &mut rng);
        let decoder = stack(dec_dims, &mut rng);
        let centers = (0..class_ids.len() * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let p = Self {
            input_scale: arch.input_dim as f64,
            encoder,
            decoder,
            class_ids: class_ids.to_vec(),
            centers,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].n_in
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder[0].n_in
    }

    pub fn n_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn class_row(&self, label: u32) -> Result<usize> {
        self.class_ids
            .iter()
            .position(|&c| c == label)
            .ok_or(Error::UnknownLabel(label))
    }

    pub fn center(&self, row: usize) -> &[f64] {
        let d = self.latent_dim();
        &self.centers[row * d..(row + 1) * d]
    }

    /// Same shapes, all weights zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            input_scale: self.input_scale,
            encoder: self.encoder.iter().map(Dense::zeros_like).collect(),
            decoder: self.decoder.iter().map(Dense::zeros_like).collect(),
            class_ids: self.class_ids.clone(),
            centers: vec![0.0; self.centers.len()],
        }
    }

    /// Trainable tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in self.encoder.iter().chain(&self.decoder) {
            v.push(&l.w);
            v.push(&l.b);
        }
        v.push(&self.centers);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            v.push(&mut l.w);
            v.push(&mut l.b);
        }
        v.push(&mut self.centers);
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let shape = |m: String| Err(Error::Shape(m));
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return shape("encoder and decoder need at least one layer".into());
        }
        for stack in [&self.encoder, &self.decoder] {
            for w in stack.windows(2) {
                if w[0].n_out != w[1].n_in {
                    return shape(format!("layer {}->{} feeds {}", w[0].n_in, w[0].n_out, w[1].n_in));
                }
            }
            for l in stack.iter() {
                if l.w.len() != l.n_in * l.n_out || l.b.len() != l.n_out {
                    return shape("layer buffer length mismatch".into());
                }
            }
        }
        let d = self.latent_dim();
        if d < 2 {
            return shape(format!("latent dimension {d} < 2"));
        }
        if self.encoder.last().unwrap().n_out != 2 * d {
            return shape("encoder output must be 2 x latent dim".into());
        }
        if self.decoder.last().unwrap().n_out != self.input_dim() {
            return shape("decoder output must match input dim".into());
        }
        if self.centers.len() != self.class_ids.len() * d {
            return shape("center matrix must be classes x latent dim".into());
        }
        if !(self.input_scale.is_finite() && self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))) {
            return Err(Error::Config("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// L1-normalizes raw counts.
pub fn normalize_input(h: &TemporalHistogram) -> Result<Vec<f64>> {
    normalize_counts(&h.counts)
}

pub fn normalize_counts(counts: &[u32]) -> Result<Vec<f64>> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(Error::EmptySignal);
    }
    let t = total as f64;
    Ok(counts.iter().map(|&c| c as f64 / t).collect())
}

fn check_input(p: &ModelParams, x: &[f64]) -> Result<()> {
    if x.len() != p.input_dim() {
        return Err(Error::Shape(format!("input has {} bins, model expects {}", x.len(), p.input_dim())));
    }
    Ok(())
}

fn encode_trace(p: &ModelParams, x: &[f64]) -> Trace {
    run_stack(&p.encoder, x.iter().map(|v| v * p.input_scale).collect())
}

/// Deterministic encoder pass: `(mu, logvar)`.
pub fn encode(x: &[f64], p: &ModelParams) -> Result<(SemanticFeature, Vec<f64>)> {
    check_input(p, x)?;
    let d = p.latent_dim();
    let mut out = encode_trace(p, x).acts.pop().unwrap();
    let logvar = out.split_off(d);
    Ok((SemanticFeature(out), logvar))
}

pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Vec<f64> {
    mu.iter()
        .zip(logvar)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Decoder pass to a unit-mass profile.
pub fn decode(z: &[f64], p: &ModelParams) -> Result<Vec<f64>> {
    if z.len() != p.latent_dim() {
        return Err(Error::Shape(format!("latent has {} dims, model expects {}", z.len(), p.latent_dim())));
    }
    Ok(softmax(run_stack(&p.decoder, z.to_vec()).acts.last().unwrap()))
}

/// Semantic feature of a raw histogram: the encoder mean, no sampling.
pub fn extract_feature(h: &TemporalHistogram, p: &ModelParams) -> Result<SemanticFeature> {
    Ok(encode(&normalize_input(h)?, p)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub rec: f64,
    pub kl: f64,
}

impl std::ops::AddAssign for LossParts {
    fn add_assign(&mut self, o: Self) {
        self.total += o.total;
        self.rec += o.rec;
        self.kl += o.kl;
    }
}

impl LossParts {
    fn scaled(self, s: f64) -> Self {
        Self {
            total: self.total * s,
            rec: self.rec * s,
            kl: self.kl * s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub beta: f64,
    pub recon: ReconLoss,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            beta: 1.0,
            recon: ReconLoss::SquaredError,
        }
    }
}

/// `KL(N(mu, diag exp(logvar)) || N(center, I))`.
pub fn kl_to_center(mu: &[f64], logvar: &[f64], center: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .zip(center)
        .map(|((m, lv), c)| lv.exp() + (m - c) * (m - c) - 1.0 - lv)
        .sum::<f64>()
}

pub fn reconstruction_loss(xhat: &[f64], x: &[f64], kind: ReconLoss) -> f64 {
    match kind {
        ReconLoss::SquaredError => xhat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum(),
        ReconLoss::PoissonNll => x
            .iter()
            .zip(xhat)
            .filter(|(&xi, _)| xi > 0.0)
            .map(|(&xi, &xh)| xi * (xi.ln() - xh.ln()))
            .sum(),
    }
}

/// Loss of one sample for a fixed noise draw `eps`.
pub fn loss(x: &[f64], label: u32, p: &ModelParams, eps: &[f64], spec: LossSpec) -> Result<LossParts> {
    check_input(p, x)?;
    let row = p.class_row(label)?;
    let (mu, logvar) = encode(x, p)?;
    let z = reparameterize(&mu.0, &logvar, eps);
    let xhat = decode(&z, p)?;
    let rec = reconstruction_loss(&xhat, x, spec.recon);
    let kl = kl_to_center(&mu.0, &logvar, p.center(row));
    Ok(LossParts {
        total: rec + spec.beta * kl,
        rec,
        kl,
    })
}

/// Accumulates the gradient of one sample's loss into `g`.
fn accumulate_sample(x: &[f64], row: usize, eps: &[f64], p: &ModelParams, spec: LossSpec, g: &mut ModelParams) -> LossParts {
    let d = p.latent_dim();
    let enc = encode_trace(p, x);
    let out = enc.acts.last().unwrap();
    let (mu, logvar) = out.split_at(d);
    let std: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
    let z: Vec<f64> = (0..d).map(|i| mu[i] + std[i] * eps[i]).collect();

    let dec = run_stack(&p.decoder, z);
    let logits = dec.acts.last().unwrap();
    let xhat = softmax(logits);
    let rec = reconstruction_loss(&xhat, x, spec.recon);
    let dlogits = match spec.recon {
        ReconLoss::SquaredError => {
            let dxhat: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| 2.0 * (a - b)).collect();
            softmax_backward(&xhat, &dxhat)
        }
        ReconLoss::PoissonNll => {
            let mass: f64 = x.iter().sum();
            xhat.iter().zip(x).map(|(xh, xi)| xh * mass - xi).collect()
        }
    };
    let dz = backprop_stack(&p.decoder, &dec, dlogits, &mut g.decoder);

    let center = p.center(row);
    let kl = kl_to_center(mu, logvar, center);
    let beta = spec.beta;
    let mut d_out = vec![0.0; 2 * d];
    for i in 0..d {
        let diff = mu[i] - center[i];
        d_out[i] = dz[i] + beta * diff;
        d_out[d + i] = dz[i] * eps[i] * 0.5 * std[i] + beta * 0.5 * (logvar[i].exp() - 1.0);
        g.centers[row * d + i] -= beta * diff;
    }
    backprop_stack(&p.encoder, &enc, d_out, &mut g.encoder);
    LossParts {
        total: rec + beta * kl,
        rec,
        kl,
    }
}

/// One training example: a normalized histogram and its class id.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub label: u32,
}

/// Gradient of the mean batch loss, with one noise vector per example.
///
/// Examples are processed in fixed-size chunks and the chunk gradients are
/// summed in order, so the result does not depend on the rayon pool size.
pub fn grad(p: &ModelParams, batch: &[&Example], eps: &[Vec<f64>], spec: LossSpec) -> Result<(ModelParams, LossParts)> {
    use rayon::prelude::*;
    const CHUNK: usize = 8;
    if batch.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if eps.len() != batch.len() {
        return Err(Error::Shape("one noise vector per example required".into()));
    }
    let mut rows = Vec::with_capacity(batch.len());
    for ex in batch {
        check_input(p, &ex.x)?;
        rows.push(p.class_row(ex.label)?);
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let parts: Vec<(ModelParams, LossParts)> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = p.zeros_like();
            let mut l = LossParts::default();
            for &i in chunk {
                l += accumulate_sample(&batch[i].x, rows[i], &eps[i], p, spec, &mut g);
            }
            (g, l)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut g, mut l) = iter.next().unwrap();
    for (gi, li) in iter {
        for (a, b) in g.tensors_mut().into_iter().zip(gi.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        l += li;
    }
    let inv = 1.0 / batch.len() as f64;
    for t in g.tensors_mut() {
        t.iter_mut().for_each(|v| *v *= inv);
    }
    Ok((g, l.scaled(inv)))
}
