//! Direct classifier: a fully connected softmax network mapping a normalized
//! histogram straight to class probabilities, trained with cross-entropy.
//! Hidden widths default to the encoder trunk so both models see the same
//! capacity.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{read_file, write_atomic, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::net::{normalize_input, Example};
use crate::nn::{backprop_stack, run_stack, softmax, Adam, Dense};
use crate::photon_sim::TemporalHistogram;
use crate::seed::derive;

pub const BASELINE_MAGIC: &[u8; 4] = b"TSPB";
const BASELINE_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64],
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineParams {
    pub input_scale: f64,
    pub layers: Vec<Dense>,
    /// Class id of each output unit, ascending.
    pub class_ids: Vec<u32>,
}

impl BaselineParams {
    fn zeros_like(&self) -> Self {
        Self {
            input_scale: self.input_scale,
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            class_ids: self.class_ids.clone(),
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [&l.w[..], &l.b[..]]).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w[..], &mut l.b[..]]).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }
}

/// Class probabilities for a normalized histogram.
pub fn baseline_probs(x: &[f64], p: &BaselineParams) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() {
        return Err(Error::Shape(format!("input has {} bins, classifier expects {}", x.len(), p.input_dim())));
    }
    let t = run_stack(&p.layers, x.iter().map(|v| v * p.input_scale).collect());
    Ok(softmax(t.acts.last().unwrap()))
}

/// Most probable class; ties go to the lowest id.
pub fn baseline_classify(h: &TemporalHistogram, p: &BaselineParams) -> Result<u32> {
    let probs = baseline_probs(&normalize_input(h)?, p)?;
    let mut best = 0;
    for (i, &v) in probs.iter().enumerate() {
        if v > probs[best] {
            best = i;
        }
    }
    Ok(p.class_ids[best])
}

/// Mean cross-entropy gradient over a batch, reduced in fixed-size chunks.
fn batch_grad(p: &BaselineParams, batch: &[(&[f64], usize)]) -> (BaselineParams, f64) {
    use rayon::prelude::*;
    let parts: Vec<(BaselineParams, f64)> = batch
        .par_chunks(8)
        .map(|chunk| {
            let mut g = p.zeros_like();
            let mut loss = 0.0;
            for &(x, row) in chunk {
                let t = run_stack(&p.layers, x.iter().map(|v| v * p.input_scale).collect());
                let mut probs = softmax(t.acts.last().unwrap());
                loss -= probs[row].max(f64::MIN_POSITIVE).ln();
                probs[row] -= 1.0;
                backprop_stack(&p.layers, &t, probs, &mut g.layers);
            }
            (g, loss)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut g, mut loss) = iter.next().unwrap();
    for (gi, li) in iter {
        for (a, b) in g.tensors_mut().into_iter().zip(gi.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        loss += li;
    }
    let inv = 1.0 / batch.len() as f64;
    g.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|v| *v *= inv));
    (g, loss * inv)
}

pub fn train_baseline(examples: &[Example], cfg: &BaselineConfig) -> Result<BaselineParams> {
    cfg.validate()?;
    let mut class_ids: Vec<u32> = examples.iter().map(|e| e.label).collect();
    class_ids.sort_unstable();
    class_ids.dedup();
    if class_ids.len() < 2 {
        return Err(Error::Config(format!("training needs at least 2 classes, got {}", class_ids.len())));
    }
    let input_dim = examples[0].x.len();
    if examples.iter().any(|e| e.x.len() != input_dim) {
        return Err(Error::Shape("examples differ in length".into()));
    }
    let mut dims = vec![input_dim];
    dims.extend(&cfg.hidden);
    dims.push(class_ids.len());
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 1));
    let mut p = BaselineParams {
        input_scale: input_dim as f64,
        layers: dims.windows(2).map(|w| Dense::glorot(w[0], w[1], &mut init_rng)).collect(),
        class_ids: class_ids.clone(),
    };
    let rows: Vec<usize> = examples
        .iter()
        .map(|e| class_ids.binary_search(&e.label).unwrap())
        .collect();
    let shapes: Vec<usize> = p.tensors().iter().map(|t| t.len()).collect();
    let mut opt = Adam::new(cfg.learning_rate, &shapes);
    let mut rng = ChaCha8Rng::seed_from_u64(derive(cfg.seed, 2));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], usize)> = idx.iter().map(|&i| (&examples[i].x[..], rows[i])).collect();
            let (g, loss) = batch_grad(&p, &batch);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("non-finite batch loss {loss}"),
                });
            }
            total += loss * idx.len() as f64;
            opt.step(p.tensors_mut(), g.tensors());
        }
        if p.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite parameter".into(),
            });
        }
        log::debug!("baseline epoch {epoch}: cross-entropy {:.6}", total / examples.len() as f64);
    }
    Ok(p)
}

/// Layout: magic `TSPB`, u16 version, f64 input scale, u32 layer count with
/// `(n_in, n_out)` each, u32 class count with the ids, then per layer the
/// weights row-major and the bias, all f64.
pub fn encode_baseline(p: &BaselineParams) -> Vec<u8> {
    let mut e = Encoder::with_capacity(64);
    e.bytes(BASELINE_MAGIC);
    e.u16(BASELINE_VERSION);
    e.f64(p.input_scale);
    e.u32(p.layers.len() as u32);
    for l in &p.layers {
        e.u32(l.n_in as u32);
        e.u32(l.n_out as u32);
    }
    e.u32(p.class_ids.len() as u32);
    p.class_ids.iter().for_each(|&c| e.u32(c));
    for t in p.tensors() {
        t.iter().for_each(|&v| e.f64(v));
    }
    e.into_inner()
}

pub fn decode_baseline(bytes: &[u8]) -> Result<BaselineParams> {
    let mut d = Decoder::new(bytes);
    d.magic(BASELINE_MAGIC)?;
    d.version(BASELINE_VERSION)?;
    let input_scale = d.f64("input scale")?;
    let at = d.offset();
    let n = d.u32("layer count")? as usize;
    if n == 0 || n > 64 {
        return Err(Error::format(at, format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for k in 0..n {
        let at = d.offset();
        let n_in = d.u32("n_in")? as usize;
        let n_out = d.u32("n_out")? as usize;
        if n_in == 0 || n_out == 0 || n_in * n_out > (1 << 28) {
            return Err(Error::format(at, format!("implausible layer shape {n_in}x{n_out}")));
        }
        if k > 0 && layers.last().is_some_and(|l: &Dense| l.n_out != n_in) {
            return Err(Error::format(at, "layer shapes do not chain"));
        }
        layers.push(Dense::zeros(n_in, n_out));
    }
    let at = d.offset();
    let m = d.u32("class count")? as usize;
    if m != layers[n - 1].n_out {
        return Err(Error::format(at, format!("{m} classes for {} outputs", layers[n - 1].n_out)));
    }
    let class_ids = (0..m).map(|_| d.u32("class id")).collect::<Result<Vec<_>>>()?;
    let mut p = BaselineParams {
        input_scale,
        layers,
        class_ids,
    };
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = d.f64("weights")?;
        }
    }
    d.finish()?;
    Ok(p)
}

pub fn save_baseline(p: &BaselineParams, path: &Path) -> Result<()> {
    write_atomic(path, &encode_baseline(p))
}

pub fn load_baseline(path: &Path) -> Result<BaselineParams> {
    decode_baseline(&read_file(path)?)
}
