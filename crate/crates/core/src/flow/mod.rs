//! Real-NVP style normalizing flow over feature vectors.
//!
//! A [`FlowModel`] is a frozen per-dimension standardizer followed by a stack
//! of [`CouplingLayer`]s with alternating half-split masks. The log-likelihood
//! of a feature vector is the standard-normal log density of its latent plus
//! the accumulated log-determinant of the Jacobian.

mod checkpoint;
mod coupling;
mod subnet;

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub(crate) use coupling::CouplingCache;
pub use coupling::{CouplingGrads, CouplingLayer};
pub use subnet::{SubNet, SubNetGrads};

use crate::error::{ensure_dim, Error, Result};
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Architecture of a freshly initialized flow.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowArch {
    pub num_layers: usize,
    pub hidden: Vec<usize>,
    pub scale_clamp: f64,
}

impl Default for FlowArch {
    fn default() -> Self {
        Self {
            num_layers: 8,
            hidden: vec![256, 256],
            scale_clamp: 2.0,
        }
    }
}

/// A latent vector `z`. Entries are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "latent entry {i} is {}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Standard isotropic normal log density.
pub fn base_log_prob(z: &LatentVector) -> f64 {
    let sq: f64 = z.values().iter().map(|v| v * v).sum();
    -0.5 * z.dim() as f64 * LN_2PI - 0.5 * sq
}

/// Mask of layer `k`: the first layer passes even indices through, the next odd ones, and so on.
pub fn alternating_mask(dim: usize, layer: usize) -> Vec<bool> {
    (0..dim).map(|i| i % 2 == layer % 2).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    dim: usize,
    shift: Array1<f64>,
    scale: Array1<f64>,
    layers: Vec<CouplingLayer>,
}

/// Per-layer intermediates of a batched forward pass.
pub(crate) struct FlowCache {
    pub(crate) layers: Vec<CouplingCache>,
}

impl FlowModel {
    /// Identity standardizer, zero-initialized subnet output layers: the new flow is the identity map.
    pub fn new(dim: usize, arch: &FlowArch, seed: u64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid(format!(
                "flow dim must be at least 2, got {dim}"
            )));
        }
        if arch.num_layers == 0 {
            return Err(Error::invalid("flow needs at least one coupling layer"));
        }
        let mut rng = seed::rng(seed::derive(seed, "flow-init"));
        let mut layers = Vec::with_capacity(arch.num_layers);
        for k in 0..arch.num_layers {
            let mask = alternating_mask(dim, k);
            let n_pass = mask.iter().filter(|&&m| m).count();
            let mut dims = vec![n_pass];
            dims.extend_from_slice(&arch.hidden);
            dims.push(dim - n_pass);
            let scale_net = SubNet::new_zero_output(&dims, &mut rng)?;
            let translate_net = SubNet::new_zero_output(&dims, &mut rng)?;
            layers.push(CouplingLayer::new(
                mask,
                scale_net,
                translate_net,
                arch.scale_clamp,
            )?);
        }
        Ok(Self {
            dim,
            shift: Array1::zeros(dim),
            scale: Array1::ones(dim),
            layers,
        })
    }

    pub fn from_parts(
        shift: Vec<f64>,
        scale: Vec<f64>,
        layers: Vec<CouplingLayer>,
    ) -> Result<Self> {
        let dim = shift.len();
        if layers.is_empty() {
            return Err(Error::invalid("flow needs at least one coupling layer"));
        }
        for (k, layer) in layers.iter().enumerate() {
            ensure_dim(dim, layer.dim())?;
            if k > 0
                && layers[k - 1]
                    .mask
                    .iter()
                    .zip(&layer.mask)
                    .any(|(a, b)| a == b)
            {
                return Err(Error::invalid(format!(
                    "mask of layer {k} does not alternate with layer {}",
                    k - 1
                )));
            }
        }
        let mut model = Self {
            dim,
            shift: Array1::zeros(dim),
            scale: Array1::ones(dim),
            layers,
        };
        model.set_standardizer(shift, scale)?;
        Ok(model)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn layers(&self) -> &[CouplingLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [CouplingLayer] {
        &mut self.layers
    }

    pub fn shift(&self) -> &Array1<f64> {
        &self.shift
    }

    pub fn scale(&self) -> &Array1<f64> {
        &self.scale
    }

    pub fn set_standardizer(&mut self, shift: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        ensure_dim(self.dim, shift.len())?;
        ensure_dim(self.dim, scale.len())?;
        if shift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("standardizer shift".into()));
        }
        if let Some(i) = scale.iter().position(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::invalid(format!(
                "standardizer scale {i} must be positive, got {}",
                scale[i]
            )));
        }
        self.shift = Array1::from(shift);
        self.scale = Array1::from(scale);
        Ok(())
    }

    /// Log-determinant contributed by the standardizer, `-Σ ln scale_i`.
    pub fn standardizer_logdet(&self) -> f64 {
        -self.scale.iter().map(|s| s.ln()).sum::<f64>()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.scale_net.num_params() + l.translate_net.num_params())
            .sum()
    }

    /// Trainable parameters flattened layer by layer (scale net, then translate net;
    /// weights then bias per linear layer). Same order as `FlowGrads::to_flat`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            for net in [&layer.scale_net, &layer.translate_net] {
                for (w, b) in net.weights.iter().zip(&net.biases) {
                    out.extend(w.iter());
                    out.extend(b.iter());
                }
            }
        }
        out
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        ensure_dim(self.num_params(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector".into()));
        }
        let mut rest = values;
        for slice in self.param_slices_mut() {
            let (head, tail) = rest.split_at(slice.len());
            slice.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_batch(&self, x: &ArrayView2<'_, f64>) -> Result<()> {
        ensure_dim(self.dim, x.ncols())?;
        if let Some(((r, c), v)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "input row {r}, column {c} is {v}"
            )));
        }
        Ok(())
    }

    fn standardize(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.shift) / &self.scale
    }

    /// `z = N(x)` for a single feature vector, with the total log-determinant.
    pub fn forward(&self, x: &[f64]) -> Result<(LatentVector, f64)> {
        ensure_dim(self.dim, x.len())?;
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let (z, logdet) = self.forward_batch(batch)?;
        let z = LatentVector::new(z.into_raw_vec_and_offset().0)?;
        Ok((z, logdet[0]))
    }

    /// Batched forward: rows are samples.
    pub fn forward_batch(&self, x: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_batch(&x)?;
        let mut h = self.standardize(x);
        let mut logdet = Array1::from_elem(x.nrows(), self.standardizer_logdet());
        for layer in &self.layers {
            let (y, ld) = layer.forward_batch(h.view());
            h = y;
            logdet += &ld;
        }
        if h.iter().chain(logdet.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow produced a non-finite latent".into()));
        }
        Ok((h, logdet))
    }

    /// Unchecked batched forward that keeps what reverse mode needs.
    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array1<f64>, FlowCache) {
        let mut h = self.standardize(x);
        let mut logdet = Array1::from_elem(x.nrows(), self.standardizer_logdet());
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, ld, cache) = layer.forward_cached(h.view());
            h = y;
            logdet += &ld;
            caches.push(cache);
        }
        (h, logdet, FlowCache { layers: caches })
    }

    pub fn inverse(&self, z: &LatentVector) -> Result<Vec<f64>> {
        ensure_dim(self.dim, z.dim())?;
        let batch = ArrayView2::from_shape((1, z.dim()), z.values()).expect("contiguous row");
        Ok(self.inverse_batch(batch)?.into_raw_vec_and_offset().0)
    }

    pub fn inverse_batch(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_batch(&z)?;
        let mut h = z.to_owned();
        for layer in self.layers.iter().rev() {
            h = layer.inverse_batch(h.view());
        }
        let x = &h * &self.scale + &self.shift;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(
                "inverse produced a non-finite feature".into(),
            ));
        }
        Ok(x)
    }

    /// Exact log-likelihood by change of variables.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        let (z, logdet) = self.forward(x)?;
        Ok(base_log_prob(&z) + logdet)
    }

    pub fn log_likelihood_batch(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        let (z, logdet) = self.forward_batch(x)?;
        let sq = z.mapv(|v| v * v).sum_axis(Axis(1));
        Ok(logdet - sq * 0.5 - 0.5 * self.dim as f64 * LN_2PI)
    }

    /// Mutable views over every trainable parameter, in checkpoint order.
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let mut v = l.scale_net.param_slices_mut();
                v.extend(l.translate_net.param_slices_mut());
                v
            })
            .collect()
    }
}
