//! `RL2M` checkpoint encoding.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "RL2M" | version u16 | dim u32 | layer count u16
//! standardizer shift: dim × f64 | standardizer scale: dim × f64
//! per coupling layer:
//!     mask: dim × f64 (1.0 = pass-through, 0.0 = transformed)
//!     scale subnet, then translate subnet, each as
//!         linear layer count u16 | layer dims (count + 1) × u32
//!         per linear layer: weights (in × out, row-major) f64, bias (out) f64
//!     scale clamp: f64
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{CouplingLayer, FlowModel, SubNet};
use crate::codec::{put_f64s, Reader};
use crate::error::{Error, FormatError, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"RL2M";
pub const CHECKPOINT_VERSION: u16 = 1;

impl FlowModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u16).to_le_bytes());
        put_f64s(&mut out, self.shift.iter().copied());
        put_f64s(&mut out, self.scale.iter().copied());
        for layer in &self.layers {
            put_f64s(
                &mut out,
                layer.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }),
            );
            write_subnet(&mut out, &layer.scale_net);
            write_subnet(&mut out, &layer.translate_net);
            put_f64s(&mut out, [layer.scale_clamp]);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let dim = r.u32()? as usize;
        let num_layers = r.u16()? as usize;
        let shift = finite(r.f64s(dim)?, 0)?;
        let scale = finite(r.f64s(dim)?, 1)?;
        let mut layers = Vec::with_capacity(num_layers);
        for k in 0..num_layers {
            let mask = r
                .f64s(dim)?
                .into_iter()
                .map(|m| match m {
                    1.0 => Ok(true),
                    0.0 => Ok(false),
                    v => Err(FormatError::Malformed(format!(
                        "mask entry {v} in layer {k}"
                    ))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            let scale_net = read_subnet(&mut r)?;
            let translate_net = read_subnet(&mut r)?;
            let clamp = r.f64s(1)?[0];
            let layer = CouplingLayer::new(mask, scale_net, translate_net, clamp)
                .map_err(|e| FormatError::Malformed(format!("layer {k}: {e}")))?;
            layers.push(layer);
        }
        if r.remaining() != 0 {
            return Err(FormatError::SizeMismatch(format!(
                "{} trailing bytes after the last layer",
                r.remaining()
            )));
        }
        FlowModel::from_parts(shift, scale, layers)
            .map_err(|e| FormatError::Malformed(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::format(path, e))
    }

    /// SHA-256 of the checkpoint encoding, as lowercase hex.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

fn finite(values: Vec<f64>, row: usize) -> Result<Vec<f64>, FormatError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(col) => Err(FormatError::NonFiniteEntry { row, col }),
        None => Ok(values),
    }
}

fn write_subnet(out: &mut Vec<u8>, net: &SubNet) {
    out.extend_from_slice(&(net.weights.len() as u16).to_le_bytes());
    for &d in &net.layer_dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (w, b) in net.weights.iter().zip(&net.biases) {
        put_f64s(out, w.iter().copied());
        put_f64s(out, b.iter().copied());
    }
}

fn read_subnet(r: &mut Reader<'_>) -> Result<SubNet, FormatError> {
    let depth = r.u16()? as usize;
    let dims = (0..=depth)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let mut weights = Vec::with_capacity(depth);
    let mut biases = Vec::with_capacity(depth);
    for k in 0..depth {
        let w = r.f64s(dims[k] * dims[k + 1])?;
        let b = r.f64s(dims[k + 1])?;
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(FormatError::Malformed("non-finite subnet parameter".into()));
        }
        weights.push(Array2::from_shape_vec((dims[k], dims[k + 1]), w).expect("sized"));
        biases.push(Array1::from(b));
    }
    SubNet::from_parts(weights, biases).map_err(|e| FormatError::Malformed(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowArch;

    fn model() -> FlowModel {
        let arch = FlowArch {
            num_layers: 3,
            hidden: vec![5],
            scale_clamp: 2.0,
        };
        let mut m = FlowModel::new(5, &arch, 11).unwrap();
        for s in m.param_slices_mut() {
            for (i, v) in s.iter_mut().enumerate() {
                *v += 0.001 * i as f64;
            }
        }
        m.set_standardizer(vec![0.1; 5], vec![1.5; 5]).unwrap();
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let bytes = m.to_bytes();
        assert_eq!(&bytes[..4], b"RL2M");
        let back = FlowModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.checksum(), m.checksum());
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = model().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            FlowModel::from_bytes(&bad),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            FlowModel::from_bytes(&bytes[..bytes.len() - 3]),
            Err(FormatError::Truncated { .. })
        ));
        bytes.push(0);
        assert!(matches!(
            FlowModel::from_bytes(&bytes),
            Err(FormatError::SizeMismatch(_))
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.rl2m");
        let m = model();
        m.save(&path).unwrap();
        assert_eq!(FlowModel::load(&path).unwrap(), m);
        assert!(FlowModel::load(dir.path().join("missing")).is_err());
    }
}
