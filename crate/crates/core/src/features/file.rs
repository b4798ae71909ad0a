//! `RL2F` feature files.
//!
//! ```text
//! magic "RL2F" | version u16 | count u32 | dim u32
//! count × dim f32 (row-major) | tag length u32 | tag (UTF-8)
//! ```
//!
//! Everything is little-endian.

use std::path::Path;

use super::FeatureSet;
use crate::codec::Reader;
use crate::error::{Error, FormatError, Result};

pub const FEATURE_MAGIC: [u8; 4] = *b"RL2F";
pub const FEATURE_VERSION: u16 = 1;

impl FeatureSet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tag = self.source_tag.as_bytes();
        let mut out = Vec::with_capacity(18 + 4 * self.data.len() + tag.len());
        out.extend_from_slice(&FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(tag.len() as u32).to_le_bytes());
        out.extend_from_slice(tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(FEATURE_MAGIC)?;
        let version = r.u16()?;
        if version != FEATURE_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        if count == 0 || dim == 0 {
            return Err(FormatError::Malformed(format!(
                "count ({count}) and dim ({dim}) must be positive"
            )));
        }
        let n_values = count
            .checked_mul(dim)
            .ok_or_else(|| FormatError::Malformed("count × dim overflows".into()))?;
        let data = r.f32s(n_values)?;
        let tag_len = r.u32()? as usize;
        if tag_len != r.remaining() {
            return Err(FormatError::SizeMismatch(format!(
                "header declares {count} × {dim} values but {} bytes follow them \
                 while the tag length field says {tag_len}",
                r.remaining()
            )));
        }
        let tag = String::from_utf8(r.take(tag_len)?.to_vec())
            .map_err(|_| FormatError::Malformed("source tag is not UTF-8".into()))?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFiniteEntry {
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(FeatureSet {
            dim,
            data,
            source_tag: tag,
        })
    }
}

pub fn save_features(set: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, set.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureSet::from_bytes(&bytes).map_err(|e| Error::format(path, e))
}
