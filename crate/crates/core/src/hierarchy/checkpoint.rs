//! Binary checkpoints of the full ADO vector.
//!
//! Layout (little endian): 8-byte magic, `u32` version, `u32` K, `u32` L,
//! `u32` N_b, `u32` ordering tag, `u64` block count, `f64` time, then
//! `4 · blocks` complex entries as `(re, im)` pairs of `f64`.

use std::io::{Read, Write};

use num_complex::Complex64;

use super::propagate::AdoVector;
use super::space::{HierarchySpace, ORDERING_TAG};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FPHEOMCK";
const VERSION: u32 = 1;

pub fn write_checkpoint(mut w: impl Write, space: &HierarchySpace, state: &AdoVector) -> Result<()> {
    if state.blocks() != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: state.blocks(),
        });
    }
    let t = space.truncation();
    w.write_all(MAGIC)?;
    for v in [VERSION, space.modes() as u32, t.depth as u32, t.per_mode_cap as u32, ORDERING_TAG] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&(state.blocks() as u64).to_le_bytes())?;
    w.write_all(&state.time().to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * state.data().len());
    for c in state.data() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads a checkpoint and checks that it belongs to `space`.
pub fn read_checkpoint(mut r: impl Read, space: &HierarchySpace) -> Result<AdoVector> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not a hierarchy checkpoint (bad magic)"));
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 5];
    for h in &mut header {
        r.read_exact(&mut word)?;
        *h = u32::from_le_bytes(word);
    }
    let [version, k, l, nb, tag] = header;
    if version != VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let t = space.truncation();
    if (k as usize, l as usize, nb as usize, tag) != (space.modes(), t.depth, t.per_mode_cap, ORDERING_TAG) {
        return Err(Error::invalid(format!(
            "checkpoint for K={k}, L={l}, N_b={nb}, ordering {tag} does not match the hierarchy (K={}, L={}, N_b={}, ordering {ORDERING_TAG})",
            space.modes(),
            t.depth,
            t.per_mode_cap
        )));
    }
    let mut long = [0u8; 8];
    r.read_exact(&mut long)?;
    let blocks = u64::from_le_bytes(long) as usize;
    if blocks != space.len() {
        return Err(Error::DimensionMismatch {
            expected: space.len(),
            found: blocks,
        });
    }
    r.read_exact(&mut long)?;
    let time = f64::from_le_bytes(long);
    let mut raw = vec![0u8; 16 * 4 * blocks];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    AdoVector::from_raw(data, time)
}
