use ndarray::{Array2, Axis};
use rand::seq::index;

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::flow::FlowModel;
use crate::metrics::latents;
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCurve {
    pub sample_sizes: Vec<usize>,
    pub mean_rl2: Vec<f64>,
    /// Sample standard deviation (n − 1) over resamples.
    pub std_rl2: Vec<f64>,
    pub resamples: usize,
}

fn subsample_mean(z: &Array2<f64>, n: usize, seed: u64) -> Vec<f64> {
    let mut idx = index::sample(&mut seed::rng(seed), z.nrows(), n).into_vec();
    // fixed summation order; a full-size draw reproduces the full set exactly
    idx.sort_unstable();
    z.select(Axis(0), &idx)
        .mean_axis(Axis(0))
        .expect("n >= 1")
        .to_vec()
}

/// Mean and spread of RL2 over seeded subsamples (without replacement) of each size.
pub fn stability_curve(
    real: &FeatureSet,
    eval: &FeatureSet,
    sizes: &[usize],
    resamples: usize,
    model: &FlowModel,
    seed: u64,
) -> Result<StabilityCurve> {
    if resamples < 2 {
        return Err(Error::invalid("stability needs at least 2 resamples"));
    }
    let limit = real.len().min(eval.len());
    if let Some(&n) = sizes.iter().find(|&&n| n == 0 || n > limit) {
        return Err(Error::invalid(format!(
            "sample size {n} must lie in [1, {limit}] (smallest corpus)"
        )));
    }
    let z_real = latents(real, model)?;
    let z_eval = latents(eval, model)?;

    let mut mean_rl2 = Vec::with_capacity(sizes.len());
    let mut std_rl2 = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let values: Vec<f64> = (0..resamples as u64)
            .map(|r| {
                let size_seed = seed::derive_indexed(seed, "stability-size", n as u64);
                let a = subsample_mean(&z_real, n, seed::derive_indexed(size_seed, "real", r));
                let b = subsample_mean(&z_eval, n, seed::derive_indexed(size_seed, "eval", r));
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mean = values.iter().sum::<f64>() / resamples as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (resamples - 1) as f64;
        mean_rl2.push(mean);
        std_rl2.push(var.sqrt());
    }
    Ok(StabilityCurve {
        sample_sizes: sizes.to_vec(),
        mean_rl2,
        std_rl2,
        resamples,
    })
}
