use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::subnet::{tanh, SubNet, SubNetGrads};
use crate::error::{ensure_dim, Error, Result};

/// Affine coupling: pass-through dims are copied, transformed dims become
/// `x · exp(s) + t` where `s` and `t` are computed from the pass-through dims.
///
/// `s` is soft-clamped as `clamp · tanh(raw / clamp)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayer {
    pub(crate) mask: Vec<bool>,
    pub(crate) scale_net: SubNet,
    pub(crate) translate_net: SubNet,
    pub(crate) scale_clamp: f64,
    pass_idx: Vec<usize>,
    trans_idx: Vec<usize>,
}

/// Intermediates kept from a batched forward pass for reverse mode.
pub(crate) struct CouplingCache {
    x_trans: Array2<f64>,
    scale_inputs: Vec<Array2<f64>>,
    translate_inputs: Vec<Array2<f64>>,
    /// tanh(raw / clamp)
    squashed: Array2<f64>,
    exp_s: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingGrads {
    pub scale_net: SubNetGrads,
    pub translate_net: SubNetGrads,
}

impl CouplingLayer {
    /// `mask[i] == true` marks dimension `i` as pass-through.
    pub fn new(
        mask: Vec<bool>,
        scale_net: SubNet,
        translate_net: SubNet,
        scale_clamp: f64,
    ) -> Result<Self> {
        let pass_idx: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let trans_idx: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if pass_idx.is_empty() || trans_idx.is_empty() {
            return Err(Error::invalid(
                "coupling mask needs at least one pass-through and one transformed dim",
            ));
        }
        if !(scale_clamp.is_finite() && scale_clamp > 0.0) {
            return Err(Error::invalid(format!(
                "scale clamp must be positive, got {scale_clamp}"
            )));
        }
        for (name, net) in [("scale", &scale_net), ("translate", &translate_net)] {
            if net.input_dim() != pass_idx.len() || net.output_dim() != trans_idx.len() {
                return Err(Error::invalid(format!(
                    "{name} subnet maps {} -> {}, layer needs {} -> {}",
                    net.input_dim(),
                    net.output_dim(),
                    pass_idx.len(),
                    trans_idx.len()
                )));
            }
        }
        Ok(Self {
            mask,
            scale_net,
            translate_net,
            scale_clamp,
            pass_idx,
            trans_idx,
        })
    }

    pub fn dim(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn scale_net(&self) -> &SubNet {
        &self.scale_net
    }

    pub fn translate_net(&self) -> &SubNet {
        &self.translate_net
    }

    pub fn scale_clamp(&self) -> f64 {
        self.scale_clamp
    }

    fn clamp_scale(&self, raw: &Array2<f64>) -> Array2<f64> {
        let c = self.scale_clamp;
        raw.mapv(|r| tanh(r / c))
    }

    /// Forward on a single vector. Returns `(y, logdet)`.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        ensure_dim(self.dim(), x.len())?;
        let batch = ArrayView2::from_shape((1, x.len()), x).expect("contiguous row");
        let (y, logdet) = self.forward_batch(batch);
        Ok((y.into_raw_vec_and_offset().0, logdet[0]))
    }

    pub fn inverse(&self, y: &[f64]) -> Result<Vec<f64>> {
        ensure_dim(self.dim(), y.len())?;
        let batch = ArrayView2::from_shape((1, y.len()), y).expect("contiguous row");
        Ok(self.inverse_batch(batch).into_raw_vec_and_offset().0)
    }

    pub(crate) fn forward_batch(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
        let x_pass = x.select(Axis(1), &self.pass_idx);
        let x_trans = x.select(Axis(1), &self.trans_idx);
        let squashed = self.clamp_scale(&self.scale_net.forward(x_pass.view()));
        let t = self.translate_net.forward(x_pass.view());
        let s = &squashed * self.scale_clamp;
        let y_trans = &x_trans * &s.mapv(f64::exp) + &t;
        let mut y = x.to_owned();
        for (j, &i) in self.trans_idx.iter().enumerate() {
            y.column_mut(i).assign(&y_trans.column(j));
        }
        (y, s.sum_axis(Axis(1)))
    }

    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> (Array2<f64>, Array1<f64>, CouplingCache) {
        let x_pass = x.select(Axis(1), &self.pass_idx);
        let x_trans = x.select(Axis(1), &self.trans_idx);
        let (raw, scale_inputs) = self.scale_net.forward_cached(x_pass.view());
        let (t, translate_inputs) = self.translate_net.forward_cached(x_pass.view());
        let squashed = self.clamp_scale(&raw);
        let s = &squashed * self.scale_clamp;
        let exp_s = s.mapv(f64::exp);
        let y_trans = &x_trans * &exp_s + &t;
        let mut y = x.to_owned();
        for (j, &i) in self.trans_idx.iter().enumerate() {
            y.column_mut(i).assign(&y_trans.column(j));
        }
        let logdet = s.sum_axis(Axis(1));
        let cache = CouplingCache {
            x_trans,
            scale_inputs,
            translate_inputs,
            squashed,
            exp_s,
        };
        (y, logdet, cache)
    }

    /// Reverse mode through one coupling.
    ///
    /// `grad_y` is dL/dy, `grad_logdet` is dL/dlogdet per sample. Returns dL/dx.
    pub(crate) fn backward(
        &self,
        cache: &CouplingCache,
        grad_y: &Array2<f64>,
        grad_logdet: &Array1<f64>,
        grads: &mut CouplingGrads,
    ) -> Array2<f64> {
        let gy_trans = grad_y.select(Axis(1), &self.trans_idx);
        let gx_trans = &gy_trans * &cache.exp_s;
        // dL/ds = gy * x * exp(s) + dL/dlogdet
        let mut grad_s = &gx_trans * &cache.x_trans;
        grad_s += &grad_logdet.view().insert_axis(Axis(1));
        // s = c * tanh(raw / c)  =>  ds/draw = 1 - tanh^2
        let grad_raw = &grad_s * &cache.squashed.mapv(|q| 1.0 - q * q);
        let g_pass_scale =
            self.scale_net
                .backward(&cache.scale_inputs, grad_raw, &mut grads.scale_net);
        let g_pass_translate = self.translate_net.backward(
            &cache.translate_inputs,
            gy_trans,
            &mut grads.translate_net,
        );

        let mut grad_x = grad_y.clone();
        for (j, &i) in self.pass_idx.iter().enumerate() {
            let mut col = grad_x.column_mut(i);
            col += &g_pass_scale.column(j);
            col += &g_pass_translate.column(j);
        }
        for (j, &i) in self.trans_idx.iter().enumerate() {
            grad_x.column_mut(i).assign(&gx_trans.column(j));
        }
        grad_x
    }

    pub(crate) fn inverse_batch(&self, y: ArrayView2<'_, f64>) -> Array2<f64> {
        let y_pass = y.select(Axis(1), &self.pass_idx);
        let y_trans = y.select(Axis(1), &self.trans_idx);
        let s = self.clamp_scale(&self.scale_net.forward(y_pass.view())) * self.scale_clamp;
        let t = self.translate_net.forward(y_pass.view());
        let x_trans = (&y_trans - &t) * &s.mapv(|v| (-v).exp());
        let mut x = y.to_owned();
        for (j, &i) in self.trans_idx.iter().enumerate() {
            x.column_mut(i).assign(&x_trans.column(j));
        }
        x
    }
}

impl CouplingGrads {
    pub fn zeros_like(layer: &CouplingLayer) -> Self {
        Self {
            scale_net: SubNetGrads::zeros_like(&layer.scale_net),
            translate_net: SubNetGrads::zeros_like(&layer.translate_net),
        }
    }
}
