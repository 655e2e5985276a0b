//! Parameter checkpoints (little-endian):
//!
//! ```text
//! magic "VRCK" | version u32 | metadata (u32 len + utf8) | count u32
//! count × (name: u32 len + utf8, rows u64, cols u64, rows·cols × f64)
//! ```

use std::path::Path;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::fsutil::{atomic_write, ByteReader, ByteWriter};

const MAGIC: &[u8; 4] = b"VRCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(store: &ParamStore, metadata: &str) -> Vec<u8> {
    let mut w = ByteWriter::default();
    w.bytes(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.str(metadata);
    w.u32(store.len() as u32);
    for p in store.iter() {
        w.str(&p.name);
        w.u64(p.value().rows() as u64);
        w.u64(p.value().cols() as u64);
        for &v in p.value().data() {
            w.f64(v);
        }
    }
    w.into_inner()
}

/// Returns the stored parameters (gradients zeroed) and the metadata string.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ParamStore, String)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnknownVersion {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let metadata = r.str()?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = r.str()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Format("parameter size overflow".into()))?;
        let mut data = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            data.push(r.f64()?);
        }
        store.add(name, Tensor::new(rows, cols, data)?);
    }
    r.finish()?;
    Ok((store, metadata))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, metadata: &str) -> Result<()> {
    atomic_write(path, &encode_checkpoint(store, metadata))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, String)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
