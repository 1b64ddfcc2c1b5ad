//! Named weight maps, linear merging and a small binary container.
//!
//! Layout, little-endian: `WMAP`, `u32` entry count, then per entry a `u16`
//! name length, the UTF-8 name, a `u64` element count and the raw `f32`s.
//! Entries are written in name order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"WMAP";

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("non-finite value in {0}")]
    NonFiniteInput(String),
    #[error("corrupt weight file: {0}")]
    CorruptFile(String),
    #[error("alpha {0} outside [0, 1]")]
    InvalidAlpha(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type WeightMap = BTreeMap<String, Vec<f32>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub alpha: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        MergeConfig { alpha: 0.8 }
    }
}

fn check_finite(m: &WeightMap) -> Result<(), WeightsError> {
    match m.iter().find(|(_, v)| v.iter().any(|x| !x.is_finite())) {
        Some((name, _)) => Err(WeightsError::NonFiniteInput(name.clone())),
        None => Ok(()),
    }
}

/// `(1 − α)·pre + α·ft`, elementwise.
pub fn merge(pre: &WeightMap, ft: &WeightMap, cfg: MergeConfig) -> Result<WeightMap, WeightsError> {
    let a = cfg.alpha;
    if !(0.0..=1.0).contains(&a) {
        return Err(WeightsError::InvalidAlpha(a));
    }
    if !pre.keys().eq(ft.keys()) {
        return Err(WeightsError::SchemaMismatch("entry names differ".into()));
    }
    check_finite(pre)?;
    check_finite(ft)?;
    pre.iter()
        .map(|(name, p)| {
            let f = &ft[name];
            if p.len() != f.len() {
                return Err(WeightsError::SchemaMismatch(format!("{name}: {} vs {} elements", p.len(), f.len())));
            }
            let merged = p.iter().zip(f).map(|(x, y)| ((1.0 - a) * *x as f64 + a * *y as f64) as f32).collect();
            Ok((name.clone(), merged))
        })
        .collect()
}

pub fn encode(map: &WeightMap) -> Result<Vec<u8>, WeightsError> {
    if map.is_empty() {
        return Err(WeightsError::CorruptFile("a weight map needs at least one entry".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    let count = u32::try_from(map.len()).map_err(|_| WeightsError::CorruptFile("too many entries".into()))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, values) in map {
        let len = u16::try_from(name.len()).ok().filter(|l| *l > 0);
        let len =
            len.ok_or_else(|| WeightsError::CorruptFile(format!("entry name length {} out of range", name.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.buf.len());
        let end = end.ok_or_else(|| WeightsError::CorruptFile(format!("truncated at byte {}", self.at)))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WeightsError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

pub fn decode(buf: &[u8]) -> Result<WeightMap, WeightsError> {
    let mut r = Reader { buf, at: 0 };
    if r.take(4)? != MAGIC {
        return Err(WeightsError::CorruptFile("bad magic".into()));
    }
    let count = u32::from_le_bytes(r.array()?);
    if count == 0 {
        return Err(WeightsError::CorruptFile("no entries".into()));
    }
    let mut map = WeightMap::new();
    for _ in 0..count {
        let len = u16::from_le_bytes(r.array()?) as usize;
        let name =
            std::str::from_utf8(r.take(len)?).map_err(|_| WeightsError::CorruptFile("name is not UTF-8".into()))?;
        let n = u64::from_le_bytes(r.array()?);
        let bytes = usize::try_from(n).ok().and_then(|n| n.checked_mul(4));
        let raw = r.take(bytes.ok_or_else(|| WeightsError::CorruptFile("element count overflows".into()))?)?;
        let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if map.insert(name.to_string(), values).is_some() {
            return Err(WeightsError::CorruptFile(format!("duplicate entry {name}")));
        }
    }
    if r.at != buf.len() {
        return Err(WeightsError::CorruptFile(format!("{} trailing bytes", buf.len() - r.at)));
    }
    Ok(map)
}

pub fn save(map: &WeightMap, path: &Path) -> Result<(), WeightsError> {
    fs::write(path, encode(map)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<WeightMap, WeightsError> {
    decode(&fs::read(path)?)
}
