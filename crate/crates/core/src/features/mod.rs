//! Feature vectors: the built-in extractor, patch cropping and the `RL2F`
//! interchange format for features computed by an external backbone.

mod extractor;
mod file;
mod patches;

use ndarray::Array2;

pub use extractor::{BuiltinExtractor, DEFAULT_EXTRACTOR_SEED, MIN_IMAGE_SIDE, OUTPUT_DIM};
pub use file::{load_features, save_features, FEATURE_MAGIC, FEATURE_VERSION};
pub use patches::crop_patches;

use crate::error::{Error, Result};

/// `n × dim` finite feature vectors (row-major, f32) plus a provenance tag.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f32>,
    source_tag: String,
}

impl FeatureSet {
    pub fn new(dim: usize, data: Vec<f32>, source_tag: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dim must be positive"));
        }
        if data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "feature buffer of {} values is not a non-empty multiple of dim {dim}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "feature row {}, column {} is {}",
                i / dim,
                i % dim,
                data[i]
            )));
        }
        Ok(Self {
            dim,
            data,
            source_tag: source_tag.into(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<f32>>, source_tag: impl Into<String>) -> Result<Self> {
        let dim = rows.first().map(Vec::len).unwrap_or(0);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::new(dim, rows.concat(), source_tag)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn set_source_tag(&mut self, tag: impl Into<String>) {
        self.source_tag = tag.into();
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// The set as an `n × dim` f64 matrix.
    pub fn to_array(&self) -> Array2<f64> {
        Array2::from_shape_vec(
            (self.len(), self.dim),
            self.data.iter().map(|&v| f64::from(v)).collect(),
        )
        .expect("length is a multiple of dim")
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::invalid(format!(
                    "row {i} out of range for a set of {}",
                    self.len()
                )));
            }
            data.extend_from_slice(self.row(i));
        }
        Self::new(self.dim, data, self.source_tag.clone())
    }
}
