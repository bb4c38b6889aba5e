use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{grad, loss, Architecture, Example, LossParts, LossSpec, ModelParams, ReconLoss};
use crate::error::{Error, Result};
use crate::nn::Adam;
use crate::seed::derive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// KL weight.
    pub beta: f64,
    pub recon: ReconLoss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            encoder_hidden: vec![128, 64],
            decoder_hidden: vec![64, 128],
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            beta: 1.0,
            recon: ReconLoss::SquaredError,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.latent_dim < 2 {
            return bad("latent_dim must be >= 2");
        }
        if self.encoder_hidden.iter().chain(&self.decoder_hidden).any(|&h| h == 0) {
            return bad("hidden sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be >= 0");
        }
        Ok(())
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            beta: self.beta,
            recon: self.recon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub rec: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Row 0 is the loss at initialization; row `e` the mean over epoch `e`.
    pub trace: Vec<EpochLoss>,
}

fn draw_eps(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

/// Mini-batch training with Adam. Deterministic given `cfg.seed`.
pub fn train(examples: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut class_ids: Vec<u32> = examples.iter().map(|e| e.label).collect();
    class_ids.sort_unstable();
    class_ids.dedup();
    if class_ids.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 classes, got {}",
            class_ids.len()
        )));
    }
    let input_dim = examples[0].x.len();
    let arch = Architecture {
        input_dim,
        latent_dim: cfg.latent_dim,
        encoder_hidden: cfg.encoder_hidden.clone(),
        decoder_hidden: cfg.decoder_hidden.clone(),
    };
    let mut params = ModelParams::init(&arch, &class_ids, derive(cfg.seed, 1))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 2));
    let spec = cfg.loss_spec();
    let d = cfg.latent_dim;

    let mut init = LossParts::default();
    for ex in examples {
        init += loss(&ex.x, ex.label, &params, &draw_eps(&mut rng, d), spec)?;
    }
    let n = examples.len() as f64;
    let mut trace = vec![EpochLoss {
        epoch: 0,
        total: init.total / n,
        rec: init.rec / n,
        kl: init.kl / n,
    }];

    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut opt = Adam::new(cfg.learning_rate, &shapes);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = LossParts::default();
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
            let eps: Vec<Vec<f64>> = idx.iter().map(|_| draw_eps(&mut rng, d)).collect();
            let (g, l) = grad(&params, &batch, &eps, spec)?;
            if !l.total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("non-finite batch loss {}", l.total),
                });
            }
            let w = idx.len() as f64;
            acc.total += l.total * w;
            acc.rec += l.rec * w;
            acc.kl += l.kl * w;
            opt.step(params.tensors_mut(), g.tensors());
        }
        let row = EpochLoss {
            epoch,
            total: acc.total / n,
            rec: acc.rec / n,
            kl: acc.kl / n,
        };
        if !row.total.is_finite() || params.validate().is_err() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite parameters".into(),
            });
        }
        log::debug!("epoch {epoch}: total {:.6} rec {:.3e} kl {:.4}", row.total, row.rec, row.kl);
        trace.push(row);
    }
    Ok(TrainOutcome { params, trace })
}
