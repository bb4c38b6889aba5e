//! Binary format: magic `TSPK`, u16 version, u32 dim, u32 entry count, then
//! per entry u32 class id, u8 provenance (0 trained, 1 self-added), u64
//! support, `dim` f64 center values and `dim` f64 variances. Little-endian.

use std::path::Path;

use super::{Provenance, Skb, SkbEntry};
use crate::binio::{read_file, write_atomic, Decoder, Encoder};
use crate::error::{Error, Result};

pub const SKB_MAGIC: &[u8; 4] = b"TSPK";
const SKB_VERSION: u16 = 1;

pub fn encode_skb(skb: &Skb) -> Vec<u8> {
    let mut e = Encoder::with_capacity(14 + skb.len() * (13 + 16 * skb.dim));
    e.bytes(SKB_MAGIC);
    e.u16(SKB_VERSION);
    e.u32(skb.dim as u32);
    e.u32(skb.entries.len() as u32);
    for entry in &skb.entries {
        e.u32(entry.class_id);
        e.u8(match entry.provenance {
            Provenance::Trained => 0,
            Provenance::SelfAdded => 1,
        });
        e.u64(entry.support as u64);
        entry.center.iter().for_each(|&v| e.f64(v));
        entry.var.iter().for_each(|&v| e.f64(v));
    }
    e.into_inner()
}

pub fn decode_skb(bytes: &[u8]) -> Result<Skb> {
    let mut d = Decoder::new(bytes);
    d.magic(SKB_MAGIC)?;
    d.version(SKB_VERSION)?;
    let dim = d.u32("dim")? as usize;
    let n = d.u32("entry count")? as usize;
    let mut skb = Skb::empty(dim);
    for _ in 0..n {
        let at = d.offset();
        let class_id = d.u32("class id")?;
        let flag_at = d.offset();
        let provenance = match d.u8("provenance")? {
            0 => Provenance::Trained,
            1 => Provenance::SelfAdded,
            other => return Err(Error::format(flag_at, format!("unknown provenance flag {other}"))),
        };
        let support = d.u64("support")? as usize;
        let center = (0..dim).map(|_| d.f64("center")).collect::<Result<Vec<_>>>()?;
        let var = (0..dim).map(|_| d.f64("variance")).collect::<Result<Vec<_>>>()?;
        skb.push(SkbEntry {
            class_id,
            center,
            var,
            provenance,
            support,
        })
        .map_err(|e| Error::format(at, e.to_string()))?;
    }
    d.finish()?;
    Ok(skb)
}

pub fn save_skb(skb: &Skb, path: &Path) -> Result<()> {
    write_atomic(path, &encode_skb(skb))
}

pub fn load_skb(path: &Path) -> Result<Skb> {
    decode_skb(&read_file(path)?)
}
