use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

/// Fully connected perceptron with `tanh` between layers and a linear output.
///
/// Weights are stored `in × out`, so a batch `x` (rows = samples) maps to
/// `x · W + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubNet {
    pub(crate) layer_dims: Vec<usize>,
    pub(crate) weights: Vec<Array2<f64>>,
    pub(crate) biases: Vec<Array1<f64>>,
}

/// Gradient buffers shaped like a [`SubNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct SubNetGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl SubNet {
    /// Xavier-uniform hidden layers, zero output layer (the net outputs 0 for every input).
    pub fn new_zero_output<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        validate_dims(layer_dims)?;
        let depth = layer_dims.len() - 1;
        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        for k in 0..depth {
            let (fan_in, fan_out) = (layer_dims[k], layer_dims[k + 1]);
            if k + 1 == depth {
                weights.push(Array2::zeros((fan_in, fan_out)));
            } else {
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                weights.push(Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    dist.sample(rng)
                }));
            }
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn from_parts(weights: Vec<Array2<f64>>, biases: Vec<Array1<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::invalid(
                "subnet needs matching, non-empty weight and bias lists",
            ));
        }
        let mut layer_dims = vec![weights[0].nrows()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.nrows() != layer_dims[k] || b.len() != w.ncols() {
                return Err(Error::invalid(format!(
                    "subnet layer {k} has inconsistent shape"
                )));
            }
            layer_dims.push(w.ncols());
        }
        validate_dims(&layer_dims)?;
        Ok(Self {
            layer_dims,
            weights,
            biases,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty")
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut h = affine(x, &self.weights[0], &self.biases[0]);
        for k in 1..=last {
            h.mapv_inplace(tanh);
            h = affine(h.view(), &self.weights[k], &self.biases[k]);
        }
        h
    }

    /// Forward pass that also returns the input of every linear layer
    /// (the raw input followed by each hidden `tanh` activation).
    pub(crate) fn forward_cached(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
        let mut inputs = Vec::with_capacity(self.weights.len());
        inputs.push(x.to_owned());
        let last = self.weights.len() - 1;
        for k in 0..last {
            let mut h = affine(inputs[k].view(), &self.weights[k], &self.biases[k]);
            h.mapv_inplace(tanh);
            inputs.push(h);
        }
        let out = affine(inputs[last].view(), &self.weights[last], &self.biases[last]);
        (out, inputs)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the subnet input.
    pub(crate) fn backward(
        &self,
        inputs: &[Array2<f64>],
        grad_out: Array2<f64>,
        grads: &mut SubNetGrads,
    ) -> Array2<f64> {
        let mut g = grad_out;
        for k in (0..self.weights.len()).rev() {
            general_mat_mul(1.0, &inputs[k].t(), &g, 1.0, &mut grads.weights[k]);
            grads.biases[k] += &g.sum_axis(Axis(0));
            let mut g_in = g.dot(&self.weights[k].t());
            if k > 0 {
                // tanh' = 1 - tanh^2, and inputs[k] holds tanh of the previous layer
                ndarray::Zip::from(&mut g_in)
                    .and(&inputs[k])
                    .for_each(|gi, &a| *gi *= 1.0 - a * a);
            }
            g = g_in;
        }
        g
    }

    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

impl SubNetGrads {
    pub fn zeros_like(net: &SubNet) -> Self {
        Self {
            weights: net
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            biases: net
                .biases
                .iter()
                .map(|b| Array1::zeros(b.raw_dim()))
                .collect(),
        }
    }

    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out
    }
}

fn affine(x: ArrayView2<'_, f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = x.dot(w);
    out += b;
    out
}

/// `tanh` through a single `exp`, several times faster than libm's.
pub(crate) fn tanh(x: f64) -> f64 {
    let t = (-2.0 * x.abs()).exp();
    ((1.0 - t) / (1.0 + t)).copysign(x)
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid(format!(
            "subnet layer dims must have at least two positive entries, got {dims:?}"
        )));
    }
    Ok(())
}
