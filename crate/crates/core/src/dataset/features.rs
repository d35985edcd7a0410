//! Binary region-feature file.
//!
//! ```text
//! b"RFEA"  version:u32  count:u64  dim:u64
//! repeated count times:  region_id:u64  values:[f32; dim]
//! ```
//!
//! Ids with the high bit set hold scene-level context features; see
//! [`context_key`].

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::dataset::ContextSource;
use crate::error::{Error, IntegrityKind, Result};
use crate::params::ByteReader;

pub const FEATURE_MAGIC: &[u8; 4] = b"RFEA";
pub const FEATURE_VERSION: u32 = 1;
pub const CONTEXT_BIT: u64 = 1 << 63;

/// Reserved id for a scene-level context row: high bit, scene id shifted by
/// three bits, and the source tag (global 0, scale2 2, scale3 3, scale4 4) in
/// the low bits.
pub fn context_key(scene_id: u64, source: ContextSource) -> Option<u64> {
    let tag = source.tag()?;
    (scene_id < (1 << 60)).then_some(CONTEXT_BIT | (scene_id << 3) | tag)
}

/// Inverse of [`context_key`].
pub fn parse_context_key(key: u64) -> Option<(u64, ContextSource)> {
    if key & CONTEXT_BIT == 0 {
        return None;
    }
    let source = ContextSource::from_tag(key & 0b111)?;
    Some(((key & !CONTEXT_BIT) >> 3, source))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureFile {
    pub dim: usize,
    pub rows: BTreeMap<u64, Vec<f32>>,
}

impl FeatureFile {
    pub fn new(dim: usize) -> Self {
        FeatureFile {
            dim,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: u64, values: Vec<f32>) -> Result<()> {
        if values.len() != self.dim {
            return Err(Error::integrity(
                IntegrityKind::Feature,
                format!("row {id} has {} values, expected {}", values.len(), self.dim),
            ));
        }
        if self.rows.insert(id, values).is_some() {
            return Err(Error::integrity(
                IntegrityKind::Feature,
                format!("duplicate feature row {id}"),
            ));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(24 + self.rows.len() * (8 + 4 * self.dim));
        self.write(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(FEATURE_MAGIC)?;
        w.write_all(&FEATURE_VERSION.to_le_bytes())?;
        w.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        w.write_all(&(self.dim as u64).to_le_bytes())?;
        for (id, values) in &self.rows {
            w.write_all(&id.to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, IntegrityKind::Feature);
        if r.take(4)? != FEATURE_MAGIC {
            return Err(r.fail("bad magic"));
        }
        let version = r.u32()?;
        if version != FEATURE_VERSION {
            return Err(r.fail(format!("unsupported version {version}")));
        }
        let count = r.len_field()?;
        let dim = r.len_field()?;
        let row_bytes = 8 + 4 * dim;
        if count.checked_mul(row_bytes) != Some(r.remaining()) {
            return Err(r.fail(format!(
                "{count} rows of dimension {dim} do not match {} payload bytes",
                r.remaining()
            )));
        }
        let mut file = FeatureFile::new(dim);
        for _ in 0..count {
            let id = r.u64()?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(r.fail(format!("non-finite value in row {id}")));
                }
                values.push(v);
            }
            file.insert(id, values)?;
        }
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
