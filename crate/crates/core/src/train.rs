//! Maximum-likelihood training of a [`FlowModel`] on real-image features.
//!
//! Gradients come from an explicit reverse pass through the couplings and
//! their subnets. The batch is split into fixed-size chunks whose gradients
//! are reduced in chunk order, so results do not depend on the thread count.

use std::fmt::Write as _;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{ensure_dim, Error, Result};
use crate::features::FeatureSet;
use crate::flow::{CouplingGrads, FlowArch, FlowModel};
use crate::seed;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const GRAD_CHUNK: usize = 128;
const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub val_fraction: f64,
    pub arch: FlowArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 42,
            val_fraction: 0.1,
            arch: FlowArch::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !open_unit(self.adam_beta1) || !open_unit(self.adam_beta2) {
            return Err(Error::invalid("adam betas must lie in (0, 1)"));
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return Err(Error::invalid("adam_eps must be positive"));
        }
        if !(0.0..0.5).contains(&self.val_fraction) {
            return Err(Error::invalid(format!(
                "val_fraction must lie in [0, 0.5), got {}",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub train_nll: Vec<f64>,
    pub val_nll: Vec<f64>,
    pub wall_clock_seconds: f64,
    pub checksum: String,
}

impl TrainReport {
    /// Plain-text report. The wall-clock time is confined to the comment header.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# rl2 train report").unwrap();
        writeln!(out, "# wall_clock_seconds = {:.3}", self.wall_clock_seconds).unwrap();
        writeln!(out, "checksum = {}", self.checksum).unwrap();
        writeln!(out, "epochs = {}", self.train_nll.len()).unwrap();
        if let (Some(t), Some(v)) = (self.train_nll.last(), self.val_nll.last()) {
            writeln!(out, "final_train_nll = {t}").unwrap();
            writeln!(out, "final_val_nll = {v}").unwrap();
        }
        writeln!(out, "epoch,train_nll,val_nll").unwrap();
        for (i, (t, v)) in self.train_nll.iter().zip(&self.val_nll).enumerate() {
            writeln!(out, "{},{t},{v}", i + 1).unwrap();
        }
        out
    }
}

/// Gradient of the mean NLL, shaped like the model parameters.
///
/// The standardizer is frozen, so its gradient entries are always zero.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowGrads {
    pub layers: Vec<CouplingGrads>,
    pub shift: Array1<f64>,
    pub scale: Array1<f64>,
}

impl FlowGrads {
    pub fn zeros_like(model: &FlowModel) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(CouplingGrads::zeros_like)
                .collect(),
            shift: Array1::zeros(model.dim()),
            scale: Array1::zeros(model.dim()),
        }
    }

    /// Views over the trainable entries in the same order as the model's parameters.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                let mut v = l.scale_net.slices();
                v.extend(l.translate_net.slices());
                v
            })
            .collect()
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let mut v = l.scale_net.slices_mut();
                v.extend(l.translate_net.slices_mut());
                v
            })
            .collect()
    }

    /// All trainable gradient entries, flattened.
    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    fn add_assign(&mut self, other: &FlowGrads) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

fn check_batch(batch: &ArrayView2<'_, f64>, model: &FlowModel) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    ensure_dim(model.dim(), batch.ncols())
}

/// `-(1/n) Σ log p(x_i)`.
pub fn nll_loss(batch: ArrayView2<'_, f64>, model: &FlowModel) -> Result<f64> {
    check_batch(&batch, model)?;
    let ll = model.log_likelihood_batch(batch)?;
    Ok(-ll.mean().expect("non-empty"))
}

/// Loss summed over `x` and gradient of `Σ nll / n_total`.
fn chunk_gradients(model: &FlowModel, x: ArrayView2<'_, f64>, n_total: usize) -> (f64, FlowGrads) {
    let (z, logdet, cache) = model.forward_cached(x);
    let half_d_ln2pi = 0.5 * model.dim() as f64 * LN_2PI;
    let loss_sum: f64 = z
        .axis_iter(Axis(0))
        .zip(logdet.iter())
        .map(|(row, ld)| 0.5 * row.dot(&row) + half_d_ln2pi - ld)
        .sum();

    let inv_n = 1.0 / n_total as f64;
    let mut grads = FlowGrads::zeros_like(model);
    let mut g: Array2<f64> = z * inv_n;
    let g_logdet = Array1::from_elem(x.nrows(), -inv_n);
    for (k, layer) in model.layers().iter().enumerate().rev() {
        g = layer.backward(&cache.layers[k], &g, &g_logdet, &mut grads.layers[k]);
    }
    (loss_sum, grads)
}

/// Mean NLL of `batch` and its gradient with respect to every subnet parameter.
pub fn gradients(batch: ArrayView2<'_, f64>, model: &FlowModel) -> Result<(f64, FlowGrads)> {
    check_batch(&batch, model)?;
    if let Some(v) = batch.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("batch contains {v}")));
    }
    let n = batch.nrows();
    let chunks: Vec<ArrayView2<'_, f64>> = batch.axis_chunks_iter(Axis(0), GRAD_CHUNK).collect();
    let parts: Vec<(f64, FlowGrads)> = chunks
        .into_par_iter()
        .map(|c| chunk_gradients(model, c, n))
        .collect();
    let mut iter = parts.into_iter();
    let (mut loss_sum, mut grads) = iter.next().expect("non-empty batch");
    for (l, g) in iter {
        loss_sum += l;
        grads.add_assign(&g);
    }
    Ok((loss_sum / n as f64, grads))
}

/// First and second moment estimates for Adam.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u32,
}

impl AdamState {
    pub fn new(model: &FlowModel) -> Self {
        let shapes: Vec<Vec<f64>> = FlowGrads::zeros_like(model)
            .slices()
            .iter()
            .map(|s| vec![0.0; s.len()])
            .collect();
        Self {
            m: shapes.clone(),
            v: shapes,
            step: 0,
        }
    }

    pub fn step(&self) -> u32 {
        self.step
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(
    model: &mut FlowModel,
    grads: &FlowGrads,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    let grad_slices = grads.slices();
    let params = model.param_slices_mut();
    let shapes_match = params.len() == grad_slices.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(&grad_slices)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_match {
        return Err(Error::invalid(
            "gradient or optimizer state shape does not match model",
        ));
    }
    state.step += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let lr = config.learning_rate;
    for (((p, g), m), v) in params
        .into_iter()
        .zip(grad_slices)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
        }
    }
    Ok(())
}

/// Per-dimension mean and (population) standard deviation, std floored at 1e-6.
pub fn fit_standardizer(data: ArrayView2<'_, f64>) -> (Vec<f64>, Vec<f64>) {
    let mean = data.mean_axis(Axis(0)).expect("non-empty");
    let std = data.std_axis(Axis(0), 0.0).mapv(|s| {
        if s.is_finite() {
            s.max(STD_FLOOR)
        } else {
            STD_FLOOR
        }
    });
    (mean.to_vec(), std.to_vec())
}

fn mean_nll(model: &FlowModel, data: ArrayView2<'_, f64>) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.axis_chunks_iter(Axis(0), 256) {
        total -= model.log_likelihood_batch(chunk)?.sum();
    }
    Ok(total / data.nrows() as f64)
}

/// Fit the standardizer on the training split, then run Adam on the mean NLL.
pub fn train(features: &FeatureSet, config: &TrainConfig) -> Result<(FlowModel, TrainReport)> {
    config.validate()?;
    let n = features.len();
    if n < 2 * config.batch_size {
        return Err(Error::invalid(format!(
            "training needs at least {} feature vectors (2 x batch_size), got {n}",
            2 * config.batch_size
        )));
    }
    let started = Instant::now();
    let data = features.to_array();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(config.seed, "split")));
    let n_val = (n as f64 * config.val_fraction).floor() as usize;
    let (val_idx, train_idx) = order.split_at(n_val);
    let train_data = data.select(Axis(0), train_idx);
    let val_data = if val_idx.is_empty() {
        train_data.clone()
    } else {
        data.select(Axis(0), val_idx)
    };

    let mut model = FlowModel::new(
        features.dim(),
        &config.arch,
        seed::derive(config.seed, "init"),
    )?;
    let (shift, scale) = fit_standardizer(train_data.view());
    model.set_standardizer(shift, scale)?;

    let mut state = AdamState::new(&model);
    let mut train_nll = Vec::with_capacity(config.epochs);
    let mut val_nll = Vec::with_capacity(config.epochs);
    let mut positions: Vec<usize> = (0..train_data.nrows()).collect();
    for epoch in 1..=config.epochs {
        positions.shuffle(&mut seed::rng(seed::derive_indexed(
            config.seed,
            "shuffle",
            epoch as u64,
        )));
        let mut epoch_sum = 0.0;
        for (step, idx) in positions.chunks(config.batch_size).enumerate() {
            let batch = train_data.select(Axis(0), idx);
            let (loss, grads) = gradients(batch.view(), &model).map_err(|e| match e {
                Error::NonFinite(_) => Error::Divergence {
                    epoch,
                    step: step + 1,
                    loss: f64::NAN,
                },
                other => other,
            })?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step: step + 1,
                    loss,
                });
            }
            epoch_sum += loss * idx.len() as f64;
            adam_step(&mut model, &grads, &mut state, config)?;
        }
        train_nll.push(epoch_sum / positions.len() as f64);
        let val = mean_nll(&model, val_data.view()).map_err(|_| Error::Divergence {
            epoch,
            step: 0,
            loss: f64::NAN,
        })?;
        val_nll.push(val);
    }

    let report = TrainReport {
        train_nll,
        val_nll,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        checksum: model.checksum(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_arch() -> FlowArch {
        FlowArch {
            num_layers: 2,
            hidden: vec![6, 6],
            scale_clamp: 2.0,
        }
    }

    #[test]
    fn nll_of_identity_flow_at_origin() {
        let model = FlowModel::new(2, &tiny_arch(), 0).unwrap();
        let loss = nll_loss(array![[0.0, 0.0]].view(), &model).unwrap();
        assert!((loss - 1.8379).abs() < 1e-4);
        let x = array![[0.3, -0.4]];
        let single = nll_loss(x.view(), &model).unwrap();
        assert_eq!(single, -model.log_likelihood(&[0.3, -0.4]).unwrap());
        let doubled = nll_loss(array![[0.3, -0.4], [0.3, -0.4]].view(), &model).unwrap();
        assert_eq!(single, doubled);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let model = FlowModel::new(2, &tiny_arch(), 0).unwrap();
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(nll_loss(empty.view(), &model).is_err());
        assert!(gradients(empty.view(), &model).is_err());
        assert!(nll_loss(array![[1.0, 2.0, 3.0]].view(), &model).is_err());
    }

    #[test]
    fn symmetric_batch_gives_zero_output_bias_gradients() {
        let mut model = FlowModel::new(4, &tiny_arch(), 0).unwrap();
        let batch = array![[0.5, -1.0, 2.0, 0.3], [-0.5, 1.0, -2.0, -0.3]];

        // translation gradient is the mean latent, zero for {x, -x}
        let (_, grads) = gradients(batch.view(), &model).unwrap();
        for layer in &grads.layers {
            let bias = layer.translate_net.biases.last().unwrap();
            assert!(bias.iter().all(|b| b.abs() < 1e-15), "{bias:?}");
        }

        // scale gradient is mean(z^2) - 1, zero once the batch is standardized to ±1
        let (shift, scale) = fit_standardizer(batch.view());
        model.set_standardizer(shift, scale).unwrap();
        let (_, grads) = gradients(batch.view(), &model).unwrap();
        for layer in &grads.layers {
            let bias = layer.scale_net.biases.last().unwrap();
            assert!(bias.iter().all(|b| b.abs() < 1e-12), "{bias:?}");
        }
        assert!(grads
            .shift
            .iter()
            .chain(grads.scale.iter())
            .all(|&g| g == 0.0));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut model = FlowModel::new(4, &tiny_arch(), 0).unwrap();
        let before = model.clone();
        let grads = FlowGrads::zeros_like(&model);
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &grads, &mut state, &TrainConfig::default()).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate_against_gradient() {
        let mut model = FlowModel::new(4, &tiny_arch(), 0).unwrap();
        let before = model.clone();
        let mut grads = FlowGrads::zeros_like(&model);
        let mut signs = Vec::new();
        for (i, s) in grads.slices_mut().into_iter().enumerate() {
            for (j, g) in s.iter_mut().enumerate() {
                *g = if (i + j) % 2 == 0 { 0.37 } else { -2.5 };
                signs.push(g.signum());
            }
        }
        let config = TrainConfig::default();
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &grads, &mut state, &config).unwrap();
        let mut after_model = model.clone();
        let mut before_model = before.clone();
        let after: Vec<f64> = after_model.param_slices_mut().concat();
        let prior: Vec<f64> = before_model.param_slices_mut().concat();
        for ((a, b), s) in after.iter().zip(&prior).zip(&signs) {
            let delta = a - b;
            assert!((delta + s * config.learning_rate).abs() < 1e-9, "{delta}");
        }
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut model = FlowModel::new(4, &tiny_arch(), 0).unwrap();
        let other = FlowModel::new(6, &tiny_arch(), 0).unwrap();
        let grads = FlowGrads::zeros_like(&other);
        let mut state = AdamState::new(&model);
        assert!(adam_step(&mut model, &grads, &mut state, &TrainConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                learning_rate: 0.0,
                ..Default::default()
            },
            TrainConfig {
                adam_beta1: 1.0,
                ..Default::default()
            },
            TrainConfig {
                adam_beta2: 0.0,
                ..Default::default()
            },
            TrainConfig {
                val_fraction: 0.5,
                ..Default::default()
            },
            TrainConfig {
                epochs: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let set = FeatureSet::new(2, vec![0.0; 2 * 10], "tiny").unwrap();
        let config = TrainConfig {
            batch_size: 8,
            ..Default::default()
        };
        assert!(matches!(train(&set, &config), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn overflowing_loss_reports_divergence() {
        let data: Vec<f32> = (0..2 * 64).map(|i| ((i * 37) % 11) as f32).collect();
        let set = FeatureSet::new(2, data, "tiny").unwrap();
        let config = TrainConfig {
            batch_size: 16,
            epochs: 3,
            learning_rate: 1e200,
            arch: tiny_arch(),
            ..Default::default()
        };
        match train(&set, &config) {
            Err(Error::Divergence { epoch, step, .. }) => {
                assert_eq!(epoch, 1);
                assert!(step >= 2, "step {step}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn standardizer_std_is_floored() {
        let data = array![[1.0, 5.0], [3.0, 5.0]];
        let (mean, std) = fit_standardizer(data.view());
        assert_eq!(mean, vec![2.0, 5.0]);
        assert_eq!(std, vec![1.0, 1e-6]);
    }

    #[test]
    fn report_text_has_header_and_rows() {
        let report = TrainReport {
            train_nll: vec![2.0, 1.5],
            val_nll: vec![2.1, 1.6],
            wall_clock_seconds: 0.5,
            checksum: "abc".into(),
        };
        let text = report.to_text();
        assert!(text.starts_with("# rl2 train report\n# wall_clock_seconds = 0.500\n"));
        assert!(text.contains("epoch,train_nll,val_nll\n1,2,2.1\n2,1.5,1.6\n"));
    }
}
