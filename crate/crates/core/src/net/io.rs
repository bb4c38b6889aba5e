//! Checkpoint format: magic `TSPN`, u16 version, f64 input scale, u32
//! encoder layer count with `(n_in, n_out)` per layer, the same for the
//! decoder, u32 class count with one u32 class id each, then every tensor
//! (per layer: weights row-major then bias; finally the center matrix) as
//! little-endian f64.

use std::io::Write;
use std::path::Path;

use super::{EpochLoss, ModelParams};
use crate::binio::{read_file, write_atomic, Decoder, Encoder};
use crate::error::{Error, Result};
use crate::nn::Dense;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TSPN";
const CHECKPOINT_VERSION: u16 = 1;

pub fn encode_params(p: &ModelParams) -> Vec<u8> {
    let mut e = Encoder::with_capacity(64 + 8 * p.param_count());
    e.bytes(CHECKPOINT_MAGIC);
    e.u16(CHECKPOINT_VERSION);
    e.f64(p.input_scale);
    for stack in [&p.encoder, &p.decoder] {
        e.u32(stack.len() as u32);
        for l in stack.iter() {
            e.u32(l.n_in as u32);
            e.u32(l.n_out as u32);
        }
    }
    e.u32(p.class_ids.len() as u32);
    for &c in &p.class_ids {
        e.u32(c);
    }
    for t in p.tensors() {
        for &v in t {
            e.f64(v);
        }
    }
    e.into_inner()
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut d = Decoder::new(bytes);
    d.magic(CHECKPOINT_MAGIC)?;
    d.version(CHECKPOINT_VERSION)?;
    let input_scale = d.f64("input scale")?;
    let read_stack = |d: &mut Decoder| -> Result<Vec<Dense>> {
        let at = d.offset();
        let n = d.u32("layer count")? as usize;
        if n == 0 || n > 64 {
            return Err(Error::format(at, format!("implausible layer count {n}")));
        }
        (0..n)
            .map(|_| {
                let at = d.offset();
                let n_in = d.u32("n_in")? as usize;
                let n_out = d.u32("n_out")? as usize;
                if n_in == 0 || n_out == 0 || n_in * n_out > (1 << 28) {
                    return Err(Error::format(at, format!("implausible layer shape {n_in}x{n_out}")));
                }
                Ok(Dense::zeros(n_in, n_out))
            })
            .collect()
    };
    let encoder = read_stack(&mut d)?;
    let decoder = read_stack(&mut d)?;
    let at = d.offset();
    let m = d.u32("class count")? as usize;
    if m > (1 << 20) {
        return Err(Error::format(at, format!("implausible class count {m}")));
    }
    let class_ids = (0..m).map(|_| d.u32("class id")).collect::<Result<Vec<_>>>()?;
    let latent = decoder[0].n_in;
    let mut p = ModelParams {
        input_scale,
        encoder,
        decoder,
        class_ids,
        centers: vec![0.0; m * latent],
    };
    for t in p.tensors_mut() {
        for v in t.iter_mut() {
            *v = d.f64("weights")?;
        }
    }
    d.finish()?;
    p.validate().map_err(|e| Error::format(bytes.len() as u64, e.to_string()))?;
    Ok(p)
}

pub fn save_params(p: &ModelParams, path: &Path) -> Result<()> {
    write_atomic(path, &encode_params(p))
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    decode_params(&read_file(path)?)
}

/// CSV with columns `epoch,l_total,l_rec,l_kl`.
pub fn write_loss_trace(trace: &[EpochLoss], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "epoch,l_total,l_rec,l_kl").unwrap();
    for r in trace {
        writeln!(buf, "{},{:e},{:e},{:e}", r.epoch, r.total, r.rec, r.kl).unwrap();
    }
    write_atomic(path, &buf)
}
