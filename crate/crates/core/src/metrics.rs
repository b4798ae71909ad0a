//! The RL2 metric, per-sample NLL scores and the FID baseline.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Axis};

use crate::error::{ensure_dim, Error, Result};
use crate::features::FeatureSet;
use crate::flow::{FlowModel, LatentVector};

const EVAL_CHUNK: usize = 256;
const NEG_EIGEN_TOLERANCE: f64 = 1e-6;
const FID_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Rl2,
    Fid,
    MeanNll,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rl2 => "RL2",
            MetricKind::Fid => "FID",
            MetricKind::MeanNll => "MeanNLL",
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricValue {
    pub kind: MetricKind,
    pub value: f64,
    pub n_real: usize,
    pub n_eval: usize,
}

impl MetricValue {
    pub const CSV_HEADER: &'static str = "name,value,n_real,n_eval";

    /// `name,value,n_real,n_eval`
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.kind, self.value, self.n_real, self.n_eval
        )
    }
}

fn check_dim(set: &FeatureSet, model: &FlowModel) -> Result<()> {
    ensure_dim(model.dim(), set.dim())
}

/// Latent vector of every row, as an `n × dim` matrix.
pub fn latents(set: &FeatureSet, model: &FlowModel) -> Result<ndarray::Array2<f64>> {
    check_dim(set, model)?;
    let data = set.to_array();
    let mut out = ndarray::Array2::zeros(data.raw_dim());
    for (src, mut dst) in data
        .axis_chunks_iter(Axis(0), EVAL_CHUNK)
        .zip(out.axis_chunks_iter_mut(Axis(0), EVAL_CHUNK))
    {
        dst.assign(&model.forward_batch(src)?.0);
    }
    Ok(out)
}

/// `(1/|S|) Σ N(x)` over the set.
pub fn mean_latent(set: &FeatureSet, model: &FlowModel) -> Result<LatentVector> {
    let z = latents(set, model)?;
    let mean: Array1<f64> = z.mean_axis(Axis(0)).expect("feature sets are non-empty");
    LatentVector::new(mean.to_vec())
}

/// Euclidean distance between two latent vectors.
pub fn latent_distance(a: &LatentVector, b: &LatentVector) -> Result<f64> {
    ensure_dim(a.dim(), b.dim())?;
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// RL2: distance between the mean latents of the real and evaluated sets.
pub fn rl2(real: &FeatureSet, eval: &FeatureSet, model: &FlowModel) -> Result<MetricValue> {
    let zr = mean_latent(real, model)?;
    let zg = mean_latent(eval, model)?;
    Ok(MetricValue {
        kind: MetricKind::Rl2,
        value: latent_distance(&zr, &zg)?,
        n_real: real.len(),
        n_eval: eval.len(),
    })
}

/// `-log p(x_i)` for every row, in input order.
pub fn per_sample_nll(set: &FeatureSet, model: &FlowModel) -> Result<Vec<f64>> {
    check_dim(set, model)?;
    let data = set.to_array();
    let mut out = Vec::with_capacity(set.len());
    for chunk in data.axis_chunks_iter(Axis(0), EVAL_CHUNK) {
        out.extend(model.log_likelihood_batch(chunk)?.iter().map(|ll| -ll));
    }
    Ok(out)
}

pub fn mean_nll(set: &FeatureSet, model: &FlowModel) -> Result<MetricValue> {
    let nll = per_sample_nll(set, model)?;
    Ok(MetricValue {
        kind: MetricKind::MeanNll,
        value: nll.iter().sum::<f64>() / nll.len() as f64,
        n_real: set.len(),
        n_eval: set.len(),
    })
}

/// Mean and covariance of a feature set: the sufficient statistics of FID.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSummary {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    count: usize,
}

impl GaussianSummary {
    /// Checks symmetry (1e-9) and positive semi-definiteness (eigenvalues ≥ -1e-8).
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, count: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        if (&covariance - covariance.transpose()).amax() > 1e-9 {
            return Err(Error::NumericalDomain("covariance is not symmetric".into()));
        }
        let min_eig = covariance.clone().symmetric_eigenvalues().min();
        if min_eig < -1e-8 {
            return Err(Error::NumericalDomain(format!(
                "covariance is not positive semi-definite (eigenvalue {min_eig})"
            )));
        }
        Ok(Self {
            mean,
            covariance,
            count: count.max(1),
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased (n − 1) covariance.
pub fn gaussian_summary(set: &FeatureSet) -> Result<GaussianSummary> {
    let n = set.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "a covariance needs at least 2 samples, got {n}"
        )));
    }
    let d = set.dim();
    let data = DMatrix::from_row_iterator(n, d, set.as_slice().iter().map(|&v| f64::from(v)));
    let mean = data.row_mean().transpose();
    let mut centered = data;
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let mut cov = centered.transpose() * &centered / (n - 1) as f64;
    cov = (&cov + cov.transpose()) * 0.5;
    GaussianSummary::new(mean, cov, n)
}

fn eigen(m: DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let d = m.nrows();
    match SymmetricEigen::try_new(m.clone(), f64::EPSILON, 10_000) {
        Some(e) => e,
        None => SymmetricEigen::new(m + DMatrix::identity(d, d) * FID_RIDGE),
    }
}

fn clamp_spectrum(values: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if let Some(&v) = values.iter().find(|&&v| v < -NEG_EIGEN_TOLERANCE) {
        return Err(Error::NumericalDomain(format!(
            "{what} has eigenvalue {v} below -{NEG_EIGEN_TOLERANCE}"
        )));
    }
    Ok(values.map(|v| v.max(0.0)))
}

fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = eigen(m.clone());
    let roots = clamp_spectrum(&e.eigenvalues, "covariance")?.map(f64::sqrt);
    Ok(&e.eigenvectors * DMatrix::from_diagonal(&roots) * e.eigenvectors.transpose())
}

/// Fréchet distance `‖μ₁−μ₂‖² + Tr(Σ₁ + Σ₂ − 2(Σ₁Σ₂)^{1/2})`.
///
/// The trace of `(Σ₁Σ₂)^{1/2}` is taken from the eigenvalues of the symmetric
/// matrix `Σ₁^{1/2} Σ₂ Σ₁^{1/2}`, which has the same spectrum.
pub fn fid(a: &GaussianSummary, b: &GaussianSummary) -> Result<MetricValue> {
    ensure_dim(a.dim(), b.dim())?;
    let diff = &a.mean - &b.mean;
    let sqrt_a = sym_sqrt(&a.covariance)?;
    let mut inner = &sqrt_a * &b.covariance * &sqrt_a;
    inner = (&inner + inner.transpose()) * 0.5;
    let spectrum = clamp_spectrum(&eigen(inner).eigenvalues, "sqrt(Σ₁)·Σ₂·sqrt(Σ₁)")?;
    let trace_sqrt: f64 = spectrum.iter().map(|v| v.sqrt()).sum();
    let value =
        diff.norm_squared() + a.covariance.trace() + b.covariance.trace() - 2.0 * trace_sqrt;
    Ok(MetricValue {
        kind: MetricKind::Fid,
        value: value.max(0.0),
        n_real: a.count,
        n_eval: b.count,
    })
}
